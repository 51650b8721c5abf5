#include "unlbench/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unlbench/errors.hpp"
#include "unlbench/rng.hpp"

namespace unlbench {

namespace {

constexpr double kMaxPrototypeCosine = 0.6;

std::vector<double> random_unit_vector(SeededRng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double n = 0.0;
  while (n < 1e-12) {
    for (auto& x : v) x = rng.normal();
    n = norm2(v);
  }
  for (auto& x : v) x /= n;
  return v;
}

bool too_close(std::span<const double> v, const Matrix& accepted, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i)
    if (dot(v, accepted.row(i)) >= kMaxPrototypeCosine) return true;
  return false;
}

// Draws `count` unit rows whose pairwise cosine (and cosine to every row of `avoid`) stays
// below the cap. Rejected candidates are redrawn; the total attempt budget is 10 * count.
Matrix draw_decorrelated(SeededRng& rng, std::size_t count, std::size_t dim, const Matrix& avoid,
                         const std::string& what) {
  Matrix out(count, dim);
  const std::size_t budget = 10 * std::max<std::size_t>(count, 1);
  std::size_t attempts = 0;
  for (std::size_t c = 0; c < count; ++c) {
    for (;;) {
      if (attempts++ >= budget) {
        throw GenerationError("cannot place " + std::to_string(count) + " " + what +
                              " unit prototypes in dimension " + std::to_string(dim) +
                              " with pairwise cosine < 0.6 within " + std::to_string(budget) +
                              " attempts");
      }
      auto v = random_unit_vector(rng, dim);
      if (too_close(v, out, c) || too_close(v, avoid, avoid.rows())) continue;
      std::copy(v.begin(), v.end(), out.row(c).begin());
      break;
    }
  }
  return out;
}

std::vector<double> anchored_prototype(SeededRng& rng, std::span<const double> anchor, double a) {
  std::vector<double> p(anchor.begin(), anchor.end());
  if (a == 1.0) return p;
  std::vector<double> u;
  double un = 0.0;
  while (un < 1e-9) {
    u = random_unit_vector(rng, anchor.size());
    const double proj = dot(u, anchor);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] -= proj * anchor[i];
    un = norm2(u);
  }
  const double b = std::sqrt(1.0 - a * a);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = a * anchor[i] + b * u[i] / un;
  const double n = norm2(p);
  for (auto& x : p) x /= n;
  return p;
}

Dataset sample_classes(SeededRng& rng, const Matrix& prototypes, std::size_t per_class,
                       double sigma) {
  Dataset ds;
  ds.num_classes = prototypes.rows();
  ds.x = Matrix(prototypes.rows() * per_class, prototypes.cols());
  ds.y.reserve(ds.x.rows());
  std::size_t r = 0;
  for (std::size_t c = 0; c < prototypes.rows(); ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++r) {
      auto row = ds.x.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = prototypes(c, j) + sigma * rng.normal();
      ds.y.push_back(static_cast<Label>(c));
    }
  }
  return ds;
}

}  // namespace

void DownstreamSpec::validate(std::size_t num_train_classes) const {
  if (name.empty()) throw ConfigError("downstream spec needs a name");
  if (num_classes < 1) throw ConfigError("downstream '" + name + "' needs at least one class");
  if (anchor_classes.size() > num_classes)
    throw ConfigError("downstream '" + name + "': more anchors than classes");
  if (!(anchor_similarity >= 0.0 && anchor_similarity <= 1.0))
    throw ConfigError("downstream '" + name + "': anchor_similarity must lie in [0,1]");
  for (auto a : anchor_classes)
    if (a >= num_train_classes)
      throw ConfigError("downstream '" + name + "': anchor class " + std::to_string(a) +
                        " is not a train class");
  if (per_class < 1) throw ConfigError("downstream '" + name + "': per_class must be positive");
  if (noise_sigma && !(*noise_sigma > 0.0))
    throw ConfigError("downstream '" + name + "': noise_sigma must be positive");
}

void SyntheticSpec::validate() const {
  if (ambient_dim < 2) throw ConfigError("ambient_dim must be >= 2");
  if (num_train_classes < 4) throw ConfigError("num_train_classes must be >= 4");
  if (!(class_noise_sigma > 0.0)) throw ConfigError("class_noise_sigma must be > 0");
  if (per_class_train < 1 || per_class_test < 1)
    throw ConfigError("per-class sample counts must be positive");
  for (std::size_t i = 0; i < downstream_specs.size(); ++i) {
    downstream_specs[i].validate(num_train_classes);
    for (std::size_t j = 0; j < i; ++j)
      if (downstream_specs[j].name == downstream_specs[i].name)
        throw ConfigError("duplicate downstream name '" + downstream_specs[i].name + "'");
  }
}

SyntheticSpec SyntheticSpec::desk_default() {
  SyntheticSpec s;
  s.downstream_specs = {
      {"oh-like", 8, {0, 4, 8, 12, 16}, 0.85, 50, std::nullopt},
      {"cub-like", 6, {2, 5, 9, 13}, 0.9, 50, 0.15},
      {"dn-like", 10, {1, 6, 10, 14, 18, 19}, 0.8, 50, std::nullopt},
  };
  return s;
}

void Dataset::validate() const {
  if (x.rows() != y.size()) throw ShapeError("dataset: row count and label count differ");
  for (auto label : y)
    if (label >= num_classes)
      throw LabelError("dataset label " + std::to_string(label) + " >= num_classes " +
                       std::to_string(num_classes));
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (auto label : y) ++counts.at(label);
  return counts;
}

Dataset filter_classes(const Dataset& ds, const std::vector<bool>& keep) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (keep.at(ds.y[i])) rows.push_back(i);
  return subset(ds, rows);
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.x = indices.empty() ? Matrix(0, ds.x.cols()) : select_rows(ds.x, indices);
  out.y.reserve(indices.size());
  for (auto i : indices) out.y.push_back(ds.y.at(i));
  return out;
}

Dataset sample_rows(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n < idx.size()) {
    SeededRng rng(seed, 0x5A3B);
    rng.shuffle(std::span<std::size_t>(idx));
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
  }
  return subset(ds, idx);
}

const DownstreamDataset& Universe::downstream_named(const std::string& name) const {
  for (const auto& d : downstream)
    if (d.name == name) return d;
  throw ConfigError("no downstream dataset named '" + name + "'");
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) noexcept {
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

Universe generate_universe(const SyntheticSpec& spec) {
  spec.validate();
  const SeededRng root(spec.prototype_seed);
  Universe u;

  SeededRng proto_rng = root.derive(1);
  u.prototypes = draw_decorrelated(proto_rng, spec.num_train_classes, spec.ambient_dim,
                                   Matrix(0, spec.ambient_dim), "train-class");

  SeededRng train_rng = root.derive(2);
  SeededRng test_rng = root.derive(3);
  u.train = sample_classes(train_rng, u.prototypes, spec.per_class_train, spec.class_noise_sigma);
  u.test = sample_classes(test_rng, u.prototypes, spec.per_class_test, spec.class_noise_sigma);

  for (std::size_t d = 0; d < spec.downstream_specs.size(); ++d) {
    const auto& ds = spec.downstream_specs[d];
    SeededRng drng = root.derive(100 + d);
    const std::size_t fresh = ds.num_classes - ds.anchor_classes.size();
    const Matrix fresh_protos =
        draw_decorrelated(drng, fresh, spec.ambient_dim, u.prototypes, "downstream '" + ds.name + "'");
    Matrix protos(ds.num_classes, spec.ambient_dim);
    for (std::size_t c = 0; c < ds.num_classes; ++c) {
      std::vector<double> p;
      if (c < ds.anchor_classes.size()) {
        p = anchored_prototype(drng, u.prototypes.row(ds.anchor_classes[c]), ds.anchor_similarity);
      } else {
        const auto row = fresh_protos.row(c - ds.anchor_classes.size());
        p.assign(row.begin(), row.end());
      }
      std::copy(p.begin(), p.end(), protos.row(c).begin());
    }
    SeededRng sample_rng = root.derive(200 + d);
    DownstreamDataset out;
    out.name = ds.name;
    out.anchor_classes = ds.anchor_classes;
    out.data = sample_classes(sample_rng, protos, ds.per_class,
                              ds.noise_sigma.value_or(spec.class_noise_sigma));
    out.prototypes = std::move(protos);
    u.downstream.push_back(std::move(out));
  }
  return u;
}

std::vector<bool> ForgetSplit::forget_mask() const {
  std::vector<bool> mask(num_classes(), false);
  for (auto c : forget_classes) mask.at(c) = true;
  return mask;
}

ForgetSplit make_forget_split(const Dataset& train, const Dataset& test,
                              std::vector<std::size_t> forget_classes) {
  const std::size_t C = train.num_classes;
  if (test.num_classes != C) throw ShapeError("train and test disagree on the class count");
  std::vector<bool> forget(C, false);
  for (auto c : forget_classes) {
    if (c >= C) throw BoundsError("forget class " + std::to_string(c) + " out of range");
    if (forget[c]) throw ConfigError("duplicate forget class " + std::to_string(c));
    forget[c] = true;
  }
  std::vector<bool> retain(C);
  ForgetSplit s;
  for (std::size_t c = 0; c < C; ++c) {
    retain[c] = !forget[c];
    if (retain[c]) s.retain_classes.push_back(c);
  }
  s.forget_classes = std::move(forget_classes);
  s.forget_train = filter_classes(train, forget);
  s.retain_train = filter_classes(train, retain);
  s.forget_test = filter_classes(test, forget);
  s.retain_test = filter_classes(test, retain);
  return s;
}

ForgetSplit split_random_forget(const Dataset& train, const Dataset& test, std::size_t n_forget,
                                std::uint64_t seed) {
  const std::size_t C = train.num_classes;
  if (n_forget >= C)
    throw BoundsError("n_forget " + std::to_string(n_forget) + " must be < num_classes " +
                      std::to_string(C));
  std::vector<std::size_t> classes(C);
  std::iota(classes.begin(), classes.end(), std::size_t{0});
  SeededRng rng(seed, 0xF0F0);
  rng.shuffle(std::span<std::size_t>(classes));
  classes.resize(n_forget);
  std::sort(classes.begin(), classes.end());
  return make_forget_split(train, test, std::move(classes));
}

ForgetSplit split_top_forget(const Dataset& train, const Dataset& test, std::size_t n_forget,
                             std::span<const std::size_t> ranked_classes) {
  if (ranked_classes.size() < n_forget)
    throw BoundsError("ranking has " + std::to_string(ranked_classes.size()) +
                      " classes, fewer than n_forget " + std::to_string(n_forget));
  if (n_forget >= train.num_classes)
    throw BoundsError("n_forget must be < num_classes");
  return make_forget_split(train, test, {ranked_classes.begin(), ranked_classes.begin() + n_forget});
}

}  // namespace unlbench
