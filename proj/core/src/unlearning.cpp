#include "unlbench/unlearning.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "unlbench/errors.hpp"
#include "unlbench/hash.hpp"

namespace unlbench {

namespace {

// Stream tags; each consumer of randomness gets its own stream so that, e.g., the
// gradient-noise stream never perturbs batch order.
constexpr std::uint64_t kForgetOrder = 0xF0;
constexpr std::uint64_t kRetainOrder = 0xE0;
constexpr std::uint64_t kRelabel = 0xAB;
constexpr std::uint64_t kResample = 0xC5;

struct Batch {
  Matrix x;
  std::vector<Label> y;
};

Batch gather(const Dataset& ds, std::span<const std::size_t> rows) {
  Batch b{select_rows(ds.x, rows), {}};
  b.y.reserve(rows.size());
  for (auto r : rows) b.y.push_back(ds.y[r]);
  return b;
}

// Endless minibatch stream over a dataset; a new seeded permutation starts each time the
// previous one is exhausted.
class BatchCycler {
 public:
  BatchCycler(const Dataset& ds, std::size_t batch, SeededRng rng)
      : ds_(ds), batch_(batch), rng_(rng) {}

  Batch next() {
    if (pos_ >= order_.size()) {
      order_ = epoch_permutation(ds_.size(), rng_, epoch_++);
      pos_ = 0;
    }
    const std::size_t end = std::min(order_.size(), pos_ + batch_);
    Batch b = gather(ds_, {order_.data() + pos_, end - pos_});
    pos_ = end;
    return b;
  }

 private:
  const Dataset& ds_;
  std::size_t batch_;
  SeededRng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::size_t epoch_ = 0;
};

void add_scaled(MlpParams& acc, const MlpParams& g, double scale = 1.0) {
  auto a = acc.blocks();
  const auto b = g.blocks();
  for (std::size_t k = 0; k < MlpParams::kBlockCount; ++k) {
    auto av = a[k]->values();
    const auto bv = b[k]->values();
    for (std::size_t i = 0; i < av.size(); ++i) av[i] += scale * bv[i];
  }
}

void require_finite(double loss, const MlpParams& params, std::size_t step, const char* what) {
  if (!std::isfinite(loss)) throw DivergenceError(std::string(what) + ": non-finite loss", step);
  for (const auto* b : params.blocks())
    if (!all_finite(*b)) throw DivergenceError(std::string(what) + ": parameter overflow", step);
}

bool is_noop(const UnlearnConfig& cfg) { return cfg.base.epochs == 0 || cfg.base.lr == 0.0; }

UnlearnResult unchanged(const MlpParams& original) {
  UnlearnResult r;
  r.params = original;
  return r;
}

void require_nonempty(const Dataset& ds, const char* what) {
  if (ds.empty()) throw DegenerateInputError(std::string(what) + " must be nonempty");
}

// Epoch loop over the forget set with per-epoch labels from `labels_for_epoch`; shared by
// RL, PL and SalUn.
template <typename LabelFn>
UnlearnResult descend_on_relabeled(const MlpParams& original, const Dataset& forget,
                                   const UnlearnConfig& cfg, LabelFn labels_for_epoch,
                                   const ParamMask* mask, const char* what) {
  UnlearnResult out;
  out.params = original;
  const auto& base = cfg.base;
  const SeededRng order_rng(base.seed, kForgetOrder);
  SgdOptimizer opt(original, base);
  for (std::size_t epoch = 0; epoch < base.epochs; ++epoch) {
    const std::vector<Label> labels = labels_for_epoch(epoch);
    const auto order = epoch_permutation(forget.size(), order_rng, epoch);
    for (std::size_t start = 0; start < order.size(); start += base.batch_size) {
      const std::size_t end = std::min(order.size(), start + base.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Matrix xb = select_rows(forget.x, rows);
      std::vector<Label> yb;
      for (auto r : rows) yb.push_back(labels[r]);
      const auto cache = forward_cached(out.params, xb);
      const double loss = cross_entropy(cache.logits, yb);
      const auto grads = backward(out.params, cache, xb, cross_entropy_grad(cache.logits, yb),
                                  Matrix(), base.freeze_encoder);
      opt.step(out.params, grads, 1.0, mask);
      require_finite(loss, out.params, out.steps, what);
      ++out.steps;
      out.sample_visits += rows.size();
    }
  }
  return out;
}

UnlearnResult relabel_run(const MlpParams& original, const Dataset& forget,
                          const UnlearnConfig& cfg, const ParamMask* mask, const char* what) {
  const SeededRng relabel_rng(cfg.base.seed, kRelabel);
  const std::size_t C = original.num_classes();
  return descend_on_relabeled(
      original, forget, cfg,
      [&](std::size_t epoch) {
        SeededRng rng = relabel_rng.derive(epoch);
        return random_relabels(forget.y, C, rng);
      },
      mask, what);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string_view method_name(Method m) noexcept {
  switch (m) {
    case Method::FT: return "FT";
    case Method::GA: return "GA";
    case Method::RL: return "RL";
    case Method::PL: return "PL";
    case Method::SalUn: return "SalUn";
    case Method::DUCK: return "DUCK";
    case Method::CU: return "CU";
    case Method::SCRUB: return "SCRUB";
    case Method::SCAR: return "SCAR";
    case Method::Retrain: return "RETRAIN";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  const std::string n = lower(name);
  for (auto m : kApproximateMethods)
    if (lower(method_name(m)) == n) return m;
  if (n == "retrain") return Method::Retrain;
  throw ConfigError("unknown unlearning method '" + std::string(name) + "'");
}

bool uses_retain_set(Method m) noexcept {
  switch (m) {
    case Method::FT:
    case Method::DUCK:
    case Method::CU:
    case Method::SCRUB:
    case Method::SCAR:
    case Method::Retrain: return true;
    default: return false;
  }
}

void UnlearnConfig::validate() const {
  base.validate();
  if (!(saliency_fraction > 0.0 && saliency_fraction <= 1.0))
    throw ConfigError("saliency_fraction must lie in (0,1]");
  if (!(distill_temperature > 0.0)) throw ConfigError("distill_temperature must be positive");
  if (!(contrast_temperature > 0.0)) throw ConfigError("contrast_temperature must be positive");
  if (!(retain_loss_weight >= 0.0)) throw ConfigError("retain_loss_weight must be >= 0");
  if (!(covariance_shrinkage >= 0.0 && covariance_shrinkage <= 1.0))
    throw ConfigError("covariance_shrinkage must lie in [0,1]");
}

UnlearnConfig default_unlearn_config(Method m) {
  UnlearnConfig c;
  c.method = m;
  c.base.batch_size = 32;
  c.base.momentum = 0.9;
  switch (m) {
    case Method::FT: c.base.lr = 0.1; c.base.epochs = 10; break;
    case Method::GA: c.base.lr = 0.045; c.base.epochs = 5; c.base.momentum = 0.0; break;
    case Method::RL: c.base.lr = 0.01; c.base.epochs = 10; break;
    case Method::PL: c.base.lr = 0.01; c.base.epochs = 5; break;
    case Method::SalUn: c.base.lr = 0.01; c.base.epochs = 10; break;
    case Method::DUCK: c.base.lr = 0.005; c.base.epochs = 5; break;
    case Method::CU: c.base.lr = 0.1; c.base.epochs = 10; break;
    case Method::SCRUB: c.base.lr = 0.02; c.base.epochs = 5; break;
    case Method::SCAR: c.base.lr = 0.0005; c.base.epochs = 5; break;
    case Method::Retrain: c.base.lr = 0.05; c.base.epochs = 30; break;
  }
  return c;
}

// ---- building blocks ----

std::vector<Label> random_relabels(std::span<const Label> labels, std::size_t num_classes,
                                   SeededRng& rng) {
  if (num_classes < 2) throw ConfigError("random relabeling needs at least two classes");
  std::vector<Label> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw LabelError("label out of range in random_relabels");
    auto r = static_cast<Label>(rng.uniform_index(num_classes - 1));
    if (r >= labels[i]) ++r;
    out[i] = r;
  }
  return out;
}

std::vector<Label> pseudo_labels(const Matrix& logits, std::span<const std::size_t> forget_classes) {
  std::vector<bool> excluded(logits.cols(), false);
  for (auto c : forget_classes)
    if (c < excluded.size()) excluded[c] = true;
  if (std::all_of(excluded.begin(), excluded.end(), [](bool b) { return b; }))
    throw ConfigError("pseudo-labeling needs at least one retain class");
  std::vector<Label> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    std::size_t best = logits.cols();
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (excluded[j]) continue;
      if (best == logits.cols() || row[j] > row[best]) best = j;
    }
    out[i] = static_cast<Label>(best);
  }
  return out;
}

ParamMask saliency_mask(const MlpParams& grads, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("saliency_fraction must lie in (0,1]");
  const auto blocks = grads.blocks();
  std::vector<double> mag;
  std::vector<std::pair<std::size_t, std::size_t>> where;
  ParamMask mask;
  for (std::size_t b = 0; b < MlpParams::kBlockCount; ++b) {
    mask.blocks[b].assign(blocks[b]->size(), false);
    for (std::size_t i = 0; i < blocks[b]->size(); ++i) {
      mag.push_back(std::abs(blocks[b]->values()[i]));
      where.emplace_back(b, i);
    }
  }
  const std::size_t total = mag.size();
  auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, total);
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mag[a] > mag[b]; });
  for (std::size_t i = 0; i < k; ++i) {
    const auto [b, j] = where[order[i]];
    mask.blocks[b][j] = true;
  }
  return mask;
}

std::string Centroids::hash() const {
  Fnv1a h;
  for (auto c : classes) h.update(std::to_string(c) + ",");
  h.update(means.values());
  h.update(precision.values());
  return h.hex();
}

Centroids compute_centroids(const MlpParams& params, const Dataset& retain) {
  require_nonempty(retain, "retain set");
  const Matrix feats = forward(params, retain.x).features;
  const auto counts = retain.class_counts();
  Centroids c;
  std::vector<std::size_t> row_of(retain.num_classes, 0);
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) continue;
    row_of[k] = c.classes.size();
    c.classes.push_back(k);
  }
  c.means = Matrix(c.classes.size(), feats.cols());
  for (std::size_t i = 0; i < feats.rows(); ++i) {
    auto m = c.means.row(row_of[retain.y[i]]);
    const auto f = feats.row(i);
    for (std::size_t j = 0; j < f.size(); ++j) m[j] += f[j];
  }
  for (std::size_t r = 0; r < c.classes.size(); ++r)
    for (auto& v : c.means.row(r)) v /= static_cast<double>(counts[c.classes[r]]);
  return c;
}

Matrix pooled_covariance(const Matrix& features, std::span<const Label> labels,
                         const Centroids& centroids) {
  const std::size_t d = features.cols();
  Matrix cov(d, d);
  std::vector<std::size_t> row_of;
  for (std::size_t r = 0; r < centroids.classes.size(); ++r) {
    if (centroids.classes[r] >= row_of.size()) row_of.resize(centroids.classes[r] + 1, SIZE_MAX);
    row_of[centroids.classes[r]] = r;
  }
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    if (labels[i] >= row_of.size() || row_of[labels[i]] == SIZE_MAX)
      throw LabelError("pooled_covariance: sample of a class without a centroid");
    const auto m = centroids.means.row(row_of[labels[i]]);
    const auto f = features.row(i);
    for (std::size_t j = 0; j < d; ++j) diff[j] = f[j] - m[j];
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) cov(a, b) += diff[a] * diff[b];
  }
  const std::size_t k = centroids.classes.size();
  const double dof = features.rows() > k ? static_cast<double>(features.rows() - k)
                                         : static_cast<double>(std::max<std::size_t>(features.rows(), 1));
  for (auto& v : cov.values()) v /= dof;
  return cov;
}

Matrix shrink_covariance(const Matrix& cov, double lambda) {
  Matrix s = cov;
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < s.cols(); ++j)
      if (i != j) s(i, j) = (1.0 - lambda) * cov(i, j);
  return s;
}

void attach_precision(Centroids& c, const Matrix& cov, double lambda,
                      std::vector<std::string>& warnings) {
  Matrix lower;
  Matrix shrunk = shrink_covariance(cov, lambda);
  if (!cholesky(shrunk, lower)) {
    warnings.push_back("covariance not SPD at shrinkage " + std::to_string(lambda) +
                       "; using diagonal (shrinkage 1)");
    lambda = 1.0;
    shrunk = shrink_covariance(cov, 1.0);
    if (!cholesky(shrunk, lower)) {
      double mean_var = 0.0;
      for (std::size_t i = 0; i < shrunk.rows(); ++i) mean_var += std::max(shrunk(i, i), 0.0);
      mean_var /= static_cast<double>(std::max<std::size_t>(shrunk.rows(), 1));
      const double floor = std::max(1e-6 * mean_var, 1e-12);
      std::size_t floored = 0;
      for (std::size_t i = 0; i < shrunk.rows(); ++i) {
        if (!(shrunk(i, i) >= floor)) {
          shrunk(i, i) = floor;
          ++floored;
        }
      }
      warnings.push_back("floored " + std::to_string(floored) + " zero-variance feature(s)");
      if (!cholesky(shrunk, lower)) throw DomainError("covariance could not be made SPD");
    }
  }
  c.precision = spd_inverse_from_cholesky(lower);
  c.shrinkage = lambda;
}

double squared_distance(std::span<const double> f, std::span<const double> m,
                        const Matrix& precision) {
  const std::size_t d = f.size();
  if (precision.empty()) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += (f[i] - m[i]) * (f[i] - m[i]);
    return s;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double di = f[i] - m[i];
    double row = 0.0;
    for (std::size_t j = 0; j < d; ++j) row += precision(i, j) * (f[j] - m[j]);
    s += di * row;
  }
  return s;
}

std::size_t nearest_centroid(std::span<const double> f, const Centroids& c) {
  if (c.classes.empty()) throw ConfigError("no retained-class centroids");
  std::size_t best = 0;
  double best_d = squared_distance(f, c.means.row(0), c.precision);
  for (std::size_t r = 1; r < c.classes.size(); ++r) {
    const double d = squared_distance(f, c.means.row(r), c.precision);
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  return best;
}

double contrastive_anchor_loss(std::span<const double> anchor, const Matrix& candidates,
                               const std::vector<bool>& positive, double tau,
                               std::span<double> d_anchor, Matrix* d_candidates, double scale) {
  const std::size_t n = candidates.rows();
  if (positive.size() != n) throw ShapeError("contrastive: positive mask size mismatch");
  if (!std::any_of(positive.begin(), positive.end(), [](bool b) { return b; }))
    throw DegenerateInputError("contrastive anchor has no positives");
  const double na = norm2(anchor);
  std::vector<double> cosine(n, 0.0), norms(n, 0.0), s(n);
  for (std::size_t j = 0; j < n; ++j) {
    norms[j] = norm2(candidates.row(j));
    if (na > 0.0 && norms[j] > 0.0) cosine[j] = dot(anchor, candidates.row(j)) / (na * norms[j]);
    s[j] = cosine[j] / tau;
  }
  const double mx = *std::max_element(s.begin(), s.end());
  double sum_all = 0.0, sum_pos = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double e = std::exp(s[j] - mx);
    sum_all += e;
    if (positive[j]) sum_pos += e;
  }
  const double loss = std::log(sum_all) - std::log(sum_pos);

  if (d_anchor.empty() && d_candidates == nullptr) return loss;
  if (na == 0.0) return loss;
  for (std::size_t j = 0; j < n; ++j) {
    if (norms[j] == 0.0) continue;
    const double e = std::exp(s[j] - mx);
    const double dl_ds = e / sum_all - (positive[j] ? e / sum_pos : 0.0);
    const double dl_dc = scale * dl_ds / tau;
    if (dl_dc == 0.0) continue;
    const auto z = candidates.row(j);
    const double inv = 1.0 / (na * norms[j]);
    if (!d_anchor.empty())
      for (std::size_t k = 0; k < anchor.size(); ++k)
        d_anchor[k] += dl_dc * (z[k] * inv - cosine[j] * anchor[k] / (na * na));
    if (d_candidates != nullptr) {
      auto dz = d_candidates->row(j);
      for (std::size_t k = 0; k < anchor.size(); ++k)
        dz[k] += dl_dc * (anchor[k] * inv - cosine[j] * z[k] / (norms[j] * norms[j]));
    }
  }
  return loss;
}

namespace {

Matrix log_softmax_rows(const Matrix& logits, double temperature) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto in = logits.row(i);
    double mx = in[0] / temperature;
    for (double v : in) mx = std::max(mx, v / temperature);
    double z = 0.0;
    for (double v : in) z += std::exp(v / temperature - mx);
    const double lse = mx + std::log(z);
    auto o = out.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) o[j] = in[j] / temperature - lse;
  }
  return out;
}

}  // namespace

double distill_kl(const Matrix& teacher_logits, const Matrix& student_logits, double temperature) {
  if (teacher_logits.rows() != student_logits.rows() || teacher_logits.cols() != student_logits.cols())
    throw ShapeError("distill_kl: logits shapes differ");
  if (teacher_logits.rows() == 0) throw DegenerateInputError("distill_kl of an empty batch");
  const Matrix lt = log_softmax_rows(teacher_logits, temperature);
  const Matrix ls = log_softmax_rows(student_logits, temperature);
  double total = 0.0;
  for (std::size_t i = 0; i < lt.size(); ++i) {
    const double pt = std::exp(lt.values()[i]);
    if (pt > 0.0) total += pt * (lt.values()[i] - ls.values()[i]);
  }
  return total / static_cast<double>(teacher_logits.rows());
}

Matrix distill_kl_grad(const Matrix& teacher_logits, const Matrix& student_logits,
                       double temperature) {
  const Matrix pt = softmax_rows(teacher_logits, temperature);
  Matrix g = softmax_rows(student_logits, temperature);
  const double scale = 1.0 / (temperature * static_cast<double>(teacher_logits.rows()));
  for (std::size_t i = 0; i < g.size(); ++i) g.values()[i] = (g.values()[i] - pt.values()[i]) * scale;
  return g;
}

// ---- methods ----

UnlearnResult unlearn_ft(const MlpParams& original, const Dataset& retain, const UnlearnConfig& cfg) {
  cfg.validate();
  if (is_noop(cfg)) return unchanged(original);
  require_nonempty(retain, "retain set");
  TrainStats stats;
  UnlearnResult out;
  out.params = sgd_train(original, retain, cfg.base, &stats);
  out.steps = stats.steps;
  out.sample_visits = stats.sample_visits;
  return out;
}

UnlearnResult unlearn_ga(const MlpParams& original, const Dataset& forget, const UnlearnConfig& cfg) {
  cfg.validate();
  if (is_noop(cfg)) return unchanged(original);
  require_nonempty(forget, "forget set");
  const auto& base = cfg.base;
  UnlearnResult out;
  out.params = original;
  const SeededRng order_rng(base.seed, kForgetOrder);
  SgdOptimizer opt(original, base);
  for (std::size_t epoch = 0; epoch < base.epochs; ++epoch) {
    const auto order = epoch_permutation(forget.size(), order_rng, epoch);
    for (std::size_t start = 0; start < order.size(); start += base.batch_size) {
      const std::size_t end = std::min(order.size(), start + base.batch_size);
      const Batch b = gather(forget, {order.data() + start, end - start});
      const auto cache = forward_cached(out.params, b.x);
      const double loss = cross_entropy(cache.logits, b.y);
      const auto grads = backward(out.params, cache, b.x, cross_entropy_grad(cache.logits, b.y),
                                  Matrix(), base.freeze_encoder);
      opt.step(out.params, grads, -1.0);
      require_finite(loss, out.params, out.steps, "GA");
      ++out.steps;
      out.sample_visits += b.y.size();
    }
  }
  return out;
}

UnlearnResult unlearn_rl(const MlpParams& original, const Dataset& forget, const UnlearnConfig& cfg) {
  cfg.validate();
  if (is_noop(cfg)) return unchanged(original);
  require_nonempty(forget, "forget set");
  return relabel_run(original, forget, cfg, nullptr, "RL");
}

UnlearnResult unlearn_pl(const MlpParams& original, const Dataset& forget,
                         std::span<const std::size_t> forget_classes, const UnlearnConfig& cfg) {
  cfg.validate();
  // Labels come from the untouched original model, before any update.
  const std::vector<Label> labels = pseudo_labels(forward(original, forget.x).logits, forget_classes);
  if (is_noop(cfg)) return unchanged(original);
  require_nonempty(forget, "forget set");
  return descend_on_relabeled(
      original, forget, cfg, [&](std::size_t) { return labels; }, nullptr, "PL");
}

UnlearnResult unlearn_salun(const MlpParams& original, const Dataset& forget,
                            const UnlearnConfig& cfg) {
  cfg.validate();
  if (is_noop(cfg)) return unchanged(original);
  require_nonempty(forget, "forget set");
  const MlpParams g = grad_cross_entropy(original, forget.x, forget.y, false);
  const ParamMask mask = saliency_mask(g, cfg.saliency_fraction);
  UnlearnResult out = relabel_run(original, forget, cfg, &mask, "SalUn");
  out.sample_visits += forget.size();
  return out;
}

UnlearnResult realign_to_centroids(const MlpParams& original, const Dataset& forget,
                                   const Dataset& retain, const UnlearnConfig& cfg,
                                   const Centroids& centroids) {
  cfg.validate();
  UnlearnResult out;
  out.centroid_hash = centroids.hash();
  out.params = original;
  if (is_noop(cfg)) return out;
  require_nonempty(forget, "forget set");
  require_nonempty(retain, "retain set");
  const auto& base = cfg.base;
  const SeededRng retain_order(base.seed, kRetainOrder);
  BatchCycler forget_batches(forget, base.batch_size, SeededRng(base.seed, kForgetOrder));
  SgdOptimizer opt(original, base);
  for (std::size_t epoch = 0; epoch < base.epochs; ++epoch) {
    const auto order = epoch_permutation(retain.size(), retain_order, epoch);
    for (std::size_t start = 0; start < order.size(); start += base.batch_size) {
      const std::size_t end = std::min(order.size(), start + base.batch_size);
      const Batch rb = gather(retain, {order.data() + start, end - start});
      const Batch fb = forget_batches.next();

      const auto fcache = forward_cached(out.params, fb.x);
      Matrix d_feat(fb.x.rows(), original.feature_dim());
      double dist_loss = 0.0;
      const double inv_nf = 1.0 / static_cast<double>(fb.x.rows());
      for (std::size_t i = 0; i < fb.x.rows(); ++i) {
        const auto f = fcache.features.row(i);
        const std::size_t k = nearest_centroid(f, centroids);
        const auto m = centroids.means.row(k);
        dist_loss += squared_distance(f, m, centroids.precision);
        auto df = d_feat.row(i);
        for (std::size_t a = 0; a < f.size(); ++a) {
          double v = f[a] - m[a];
          if (!centroids.precision.empty()) {
            v = 0.0;
            for (std::size_t b = 0; b < f.size(); ++b) v += centroids.precision(a, b) * (f[b] - m[b]);
          }
          df[a] = 2.0 * v * inv_nf;
        }
      }
      dist_loss *= inv_nf;
      MlpParams grads = backward(out.params, fcache, fb.x, Matrix(), d_feat, base.freeze_encoder);

      const auto rcache = forward_cached(out.params, rb.x);
      const double ce = cross_entropy(rcache.logits, rb.y);
      Matrix d_logits = cross_entropy_grad(rcache.logits, rb.y);
      for (auto& v : d_logits.values()) v *= cfg.retain_loss_weight;
      add_scaled(grads, backward(out.params, rcache, rb.x, d_logits, Matrix(), base.freeze_encoder));

      opt.step(out.params, grads);
      require_finite(dist_loss + ce, out.params, out.steps,
                     centroids.precision.empty() ? "DUCK" : "SCAR");
      ++out.steps;
      out.sample_visits += fb.y.size() + rb.y.size();
    }
  }
  return out;
}

UnlearnResult unlearn_duck(const MlpParams& original, const Dataset& forget, const Dataset& retain,
                           const UnlearnConfig& cfg) {
  cfg.validate();
  const Centroids centroids = compute_centroids(original, retain);
  return realign_to_centroids(original, forget, retain, cfg, centroids);
}

UnlearnResult unlearn_scar(const MlpParams& original, const Dataset& forget, const Dataset& retain,
                           const UnlearnConfig& cfg) {
  cfg.validate();
  Centroids centroids = compute_centroids(original, retain);
  const Matrix feats = forward(original, retain.x).features;
  std::vector<std::string> warnings;
  attach_precision(centroids, pooled_covariance(feats, retain.y, centroids), cfg.covariance_shrinkage,
                   warnings);
  UnlearnResult out = realign_to_centroids(original, forget, retain, cfg, centroids);
  out.warnings.insert(out.warnings.begin(), warnings.begin(), warnings.end());
  return out;
}

UnlearnResult unlearn_cu(const MlpParams& original, const Dataset& forget, const Dataset& retain,
                         const UnlearnConfig& cfg) {
  cfg.validate();
  if (is_noop(cfg)) return unchanged(original);
  require_nonempty(forget, "forget set");
  require_nonempty(retain, "retain set");
  const auto& base = cfg.base;
  UnlearnResult out;
  out.params = original;
  const SeededRng retain_order(base.seed, kRetainOrder);
  SeededRng resample_rng(base.seed, kResample);
  BatchCycler forget_batches(forget, base.batch_size, SeededRng(base.seed, kForgetOrder));
  SgdOptimizer opt(original, base);

  // Candidates for anchor i are every other row of the joint batch; positives are rows of
  // a different class.
  auto lacks_positive = [](const std::vector<Label>& labels, std::size_t nf, std::size_t i) {
    for (std::size_t j = 0; j < labels.size(); ++j)
      if (j != i && labels[j] != labels[i]) return false;
    return nf > 0;
  };

  for (std::size_t epoch = 0; epoch < base.epochs; ++epoch) {
    const auto order = epoch_permutation(retain.size(), retain_order, epoch);
    for (std::size_t start = 0; start < order.size(); start += base.batch_size) {
      const std::size_t end = std::min(order.size(), start + base.batch_size);
      Batch rb = gather(retain, {order.data() + start, end - start});
      const Batch fb = forget_batches.next();
      const std::size_t nf = fb.y.size();

      std::vector<Label> labels = fb.y;
      labels.insert(labels.end(), rb.y.begin(), rb.y.end());
      bool missing = false;
      for (std::size_t i = 0; i < nf; ++i) missing = missing || lacks_positive(labels, nf, i);
      if (missing) {
        std::vector<std::size_t> rows(rb.y.size());
        for (auto& r : rows) r = static_cast<std::size_t>(resample_rng.uniform_index(retain.size()));
        rb = gather(retain, rows);
        labels.assign(fb.y.begin(), fb.y.end());
        labels.insert(labels.end(), rb.y.begin(), rb.y.end());
      }

      const Matrix x = vstack(fb.x, rb.x);
      const auto cache = forward_cached(out.params, x);
      const std::size_t n = labels.size();
      Matrix d_feat(n, original.feature_dim());
      double contrast = 0.0;
      std::size_t used = 0;
      std::vector<bool> usable(nf);
      for (std::size_t i = 0; i < nf; ++i) {
        usable[i] = !lacks_positive(labels, nf, i);
        if (usable[i]) ++used;
        else ++out.skipped_anchors;
      }
      const double scale = used > 0 ? 1.0 / static_cast<double>(used) : 0.0;
      for (std::size_t i = 0; i < nf; ++i) {
        if (!usable[i]) continue;
        std::vector<std::size_t> cand_rows;
        std::vector<bool> positive;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          cand_rows.push_back(j);
          positive.push_back(labels[j] != labels[i]);
        }
        const Matrix cands = select_rows(cache.features, cand_rows);
        Matrix d_cands(cands.rows(), cands.cols());
        contrast += scale * contrastive_anchor_loss(cache.features.row(i), cands, positive,
                                                    cfg.contrast_temperature, d_feat.row(i),
                                                    &d_cands, scale);
        for (std::size_t c = 0; c < cand_rows.size(); ++c) {
          auto dst = d_feat.row(cand_rows[c]);
          const auto src = d_cands.row(c);
          for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
      }

      Matrix d_logits(n, original.num_classes());
      const Matrix rlogits = select_rows(cache.logits, [&] {
        std::vector<std::size_t> r(rb.y.size());
        std::iota(r.begin(), r.end(), nf);
        return r;
      }());
      const double ce = cross_entropy(rlogits, rb.y);
      const Matrix g_ce = cross_entropy_grad(rlogits, rb.y);
      for (std::size_t i = 0; i < rb.y.size(); ++i)
        for (std::size_t c = 0; c < d_logits.cols(); ++c)
          d_logits(nf + i, c) = cfg.retain_loss_weight * g_ce(i, c);

      const auto grads = backward(out.params, cache, x, d_logits, d_feat, base.freeze_encoder);
      opt.step(out.params, grads);
      require_finite(contrast + ce, out.params, out.steps, "CU");
      ++out.steps;
      out.sample_visits += n;
    }
  }
  if (out.skipped_anchors > 0)
    out.warnings.push_back("skipped " + std::to_string(out.skipped_anchors) +
                           " anchor(s) without positives");
  return out;
}

UnlearnResult unlearn_scrub(const MlpParams& original, const Dataset& forget, const Dataset& retain,
                            const UnlearnConfig& cfg) {
  cfg.validate();
  if (is_noop(cfg)) return unchanged(original);
  require_nonempty(forget, "forget set");
  require_nonempty(retain, "retain set");
  const auto& base = cfg.base;
  const double T = cfg.distill_temperature;
  UnlearnResult out;
  out.params = original;
  const SeededRng forget_order(base.seed, kForgetOrder);
  const SeededRng retain_order(base.seed, kRetainOrder);
  SgdOptimizer opt(original, base);
  std::size_t forget_epoch = 0, retain_epoch = 0;

  for (std::size_t epoch = 0; epoch < base.epochs; ++epoch) {
    // Max phase: push the student's forget-set outputs away from the teacher.
    for (std::size_t pass = 0; pass < cfg.scrub_max_steps_per_epoch; ++pass) {
      const auto order = epoch_permutation(forget.size(), forget_order, forget_epoch++);
      for (std::size_t start = 0; start < order.size(); start += base.batch_size) {
        const std::size_t end = std::min(order.size(), start + base.batch_size);
        const Batch b = gather(forget, {order.data() + start, end - start});
        const Matrix teacher = forward(original, b.x).logits;
        const auto cache = forward_cached(out.params, b.x);
        const double kl = distill_kl(teacher, cache.logits, T);
        const auto grads = backward(out.params, cache, b.x, distill_kl_grad(teacher, cache.logits, T),
                                    Matrix(), base.freeze_encoder);
        opt.step(out.params, grads, -1.0);
        require_finite(kl, out.params, out.steps, "SCRUB");
        ++out.steps;
        out.sample_visits += b.y.size();
      }
    }
    // Min phase: stay close to the teacher on the retain set and keep its labels.
    for (std::size_t pass = 0; pass < cfg.scrub_min_steps_per_epoch; ++pass) {
      const auto order = epoch_permutation(retain.size(), retain_order, retain_epoch++);
      for (std::size_t start = 0; start < order.size(); start += base.batch_size) {
        const std::size_t end = std::min(order.size(), start + base.batch_size);
        const Batch b = gather(retain, {order.data() + start, end - start});
        const Matrix teacher = forward(original, b.x).logits;
        const auto cache = forward_cached(out.params, b.x);
        const double loss = distill_kl(teacher, cache.logits, T) + cross_entropy(cache.logits, b.y);
        Matrix d_logits = distill_kl_grad(teacher, cache.logits, T);
        const Matrix g_ce = cross_entropy_grad(cache.logits, b.y);
        for (std::size_t i = 0; i < d_logits.size(); ++i) d_logits.values()[i] += g_ce.values()[i];
        const auto grads = backward(out.params, cache, b.x, d_logits, Matrix(), base.freeze_encoder);
        opt.step(out.params, grads);
        require_finite(loss, out.params, out.steps, "SCRUB");
        ++out.steps;
        out.sample_visits += b.y.size();
      }
    }
  }
  return out;
}

UnlearnResult retrain_gold(std::size_t input_dim, std::size_t hidden_dim, std::size_t feature_dim,
                           std::size_t num_classes, const Dataset& retain, const TrainConfig& base) {
  base.validate();
  TrainStats stats;
  UnlearnResult out;
  out.params = sgd_train(initial_params(input_dim, hidden_dim, feature_dim, num_classes, base.seed),
                         retain, base, &stats);
  out.steps = stats.steps;
  out.sample_visits = stats.sample_visits;
  return out;
}

UnlearnResult run_unlearning(const MlpParams& original, const ForgetSplit& split,
                             const UnlearnConfig& cfg) {
  switch (cfg.method) {
    case Method::FT: return unlearn_ft(original, split.retain_train, cfg);
    case Method::GA: return unlearn_ga(original, split.forget_train, cfg);
    case Method::RL: return unlearn_rl(original, split.forget_train, cfg);
    case Method::PL: return unlearn_pl(original, split.forget_train, split.forget_classes, cfg);
    case Method::SalUn: return unlearn_salun(original, split.forget_train, cfg);
    case Method::DUCK: return unlearn_duck(original, split.forget_train, split.retain_train, cfg);
    case Method::CU: return unlearn_cu(original, split.forget_train, split.retain_train, cfg);
    case Method::SCRUB: return unlearn_scrub(original, split.forget_train, split.retain_train, cfg);
    case Method::SCAR: return unlearn_scar(original, split.forget_train, split.retain_train, cfg);
    case Method::Retrain:
      return retrain_gold(original.input_dim(), original.hidden_dim(), original.feature_dim(),
                          original.num_classes(), split.retain_train, cfg.base);
  }
  throw ConfigError("unhandled method");
}

}  // namespace unlbench
