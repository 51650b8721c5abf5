#include "unlbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "unlbench/errors.hpp"
#include "unlbench/rng.hpp"

namespace unlbench {

namespace {

constexpr double kSelfHsicFloor = 1e-12;
constexpr std::uint64_t kSplitStream = 0x5B17;
constexpr std::uint64_t kSvmStream = 0x5F3;

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0))
    throw DomainError(std::string(what) + " = " + std::to_string(v) + " lies outside [0,1]");
}

}  // namespace

Accuracies split_accuracies(const MlpParams& params, const ForgetSplit& split) {
  return {accuracy(params, split.forget_train), accuracy(params, split.retain_train),
          accuracy(params, split.forget_test), accuracy(params, split.retain_test)};
}

LogitGaps logit_gaps(const Accuracies& u, const Accuracies& r) {
  return {u, std::abs(u.fa - r.fa), std::abs(u.ra - r.ra), std::abs(u.tfa - r.tfa),
          std::abs(u.tra - r.tra)};
}

double compute_agl(const LogitGaps& g) {
  check_unit(g.g_f, "forget gap");
  check_unit(g.g_r, "retain gap");
  check_unit(g.g_tf, "forget-test gap");
  check_unit(g.g_tr, "retain-test gap");
  return (1.0 - g.g_f) * (1.0 - g.g_r) * (1.0 - g.g_tf) * (1.0 - g.g_tr);
}

double compute_cka(const Matrix& a, const Matrix& b, CkaForm form) {
  if (a.rows() != b.rows())
    throw ShapeError("CKA inputs have " + std::to_string(a.rows()) + " and " +
                     std::to_string(b.rows()) + " rows");
  if (a.rows() < 3) throw DegenerateInputError("CKA needs at least 3 rows");
  const Matrix ka = gram_linear(a);
  const Matrix kb = gram_linear(b);
  const double hab = hsic(ka, kb);
  const double haa = hsic(ka, ka);
  const double hbb = hsic(kb, kb);
  if (haa < kSelfHsicFloor || hbb < kSelfHsicFloor) return 0.0;
  if (form == CkaForm::LiteralSquared) return (hab * hab) / (haa * haa * hbb * hbb);
  return std::clamp(hab / std::sqrt(haa * hbb), 0.0, 1.0);
}

StratifiedSplit stratified_split(std::span<const Label> labels, std::size_t num_classes,
                                 std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw LabelError("label out of range in stratified_split");
    by_class[labels[i]].push_back(i);
  }
  const SeededRng root(seed, kSplitStream);
  StratifiedSplit s;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto rows = by_class[c];
    const std::size_t n_test = rows.size() / 5;
    SeededRng rng = root.derive(c);
    rng.shuffle(std::span<std::size_t>(rows));
    std::vector<std::size_t> test(rows.begin(), rows.begin() + n_test);
    std::vector<std::size_t> train(rows.begin() + n_test, rows.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    s.train.insert(s.train.end(), train.begin(), train.end());
    s.test.insert(s.test.end(), test.begin(), test.end());
  }
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::vector<Label> knn_predict(const Matrix& train_x, std::span<const Label> train_y,
                               const Matrix& test_x, std::size_t k, std::size_t num_classes) {
  if (train_x.rows() != train_y.size()) throw ShapeError("knn: train rows and labels differ");
  if (train_x.cols() != test_x.cols()) throw ShapeError("knn: feature widths differ");
  if (k < 1 || k > train_x.rows()) throw BoundsError("knn: k must lie in [1, train rows]");
  std::vector<double> train_norm(train_x.rows());
  for (std::size_t j = 0; j < train_x.rows(); ++j) train_norm[j] = norm2(train_x.row(j));

  std::vector<Label> out(test_x.rows());
  std::vector<std::pair<double, std::size_t>> dist(train_x.rows());
  std::vector<std::size_t> votes(num_classes);
  for (std::size_t i = 0; i < test_x.rows(); ++i) {
    const auto q = test_x.row(i);
    const double qn = norm2(q);
    for (std::size_t j = 0; j < train_x.rows(); ++j) {
      double cos = 0.0;
      if (qn > 0.0 && train_norm[j] > 0.0) cos = dot(q, train_x.row(j)) / (qn * train_norm[j]);
      dist[j] = {1.0 - cos, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::fill(votes.begin(), votes.end(), 0);
    for (std::size_t n = 0; n < k; ++n) ++votes.at(train_y[dist[n].second]);
    out[i] = static_cast<Label>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

double compute_knn_accuracy(const Matrix& features, std::span<const Label> labels,
                            std::size_t num_classes, std::size_t k, std::uint64_t split_seed) {
  if (features.rows() != labels.size()) throw ShapeError("knn: feature rows and labels differ");
  const auto split = stratified_split(labels, num_classes, split_seed);
  std::vector<std::size_t> per_class(num_classes, 0);
  std::vector<bool> present(num_classes, false);
  for (auto l : labels) present[l] = true;
  for (auto r : split.train) ++per_class[labels[r]];
  for (std::size_t c = 0; c < num_classes; ++c)
    if (present[c] && per_class[c] < k + 1)
      throw DegenerateInputError("k-NN: class " + std::to_string(c) + " has " +
                                 std::to_string(per_class[c]) + " training rows, needs " +
                                 std::to_string(k + 1));
  if (split.test.empty()) throw DegenerateInputError("k-NN: empty test split");
  std::vector<Label> train_y, test_y;
  for (auto r : split.train) train_y.push_back(labels[r]);
  for (auto r : split.test) test_y.push_back(labels[r]);
  const auto pred = knn_predict(select_rows(features, split.train), train_y,
                                select_rows(features, split.test), k, num_classes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test_y[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

const DownstreamRepr* ReprScores::find(const std::string& name) const noexcept {
  for (const auto& d : datasets)
    if (d.name == name) return &d;
  return nullptr;
}

std::string_view scenario_kind_name(ScenarioKind k) noexcept {
  return k == ScenarioKind::Top ? "top" : "random";
}

ScenarioKind parse_scenario_kind(std::string_view s) {
  if (s == "random") return ScenarioKind::Random;
  if (s == "top") return ScenarioKind::Top;
  throw ConfigError("scenario kind must be 'random' or 'top', got '" + std::string(s) + "'");
}

std::vector<std::string> agr_datasets(const ReprScores& repr, ScenarioKind kind,
                                      const std::optional<std::string>& related) {
  if (kind == ScenarioKind::Top) {
    if (!related) throw ConfigError("top scenario needs a related downstream dataset");
    if (repr.find(*related) == nullptr)
      throw ConfigError("related dataset '" + *related + "' has no representation scores");
    return {*related};
  }
  if (repr.datasets.empty()) throw ConfigError("random scenario needs downstream datasets");
  std::vector<std::string> names;
  for (const auto& d : repr.datasets) names.push_back(d.name);
  return names;
}

double compute_agr(const ReprScores& repr, ScenarioKind kind,
                   const std::optional<std::string>& related) {
  const auto names = agr_datasets(repr, kind, related);
  double gap = 0.0, cka = 0.0;
  for (const auto& n : names) {
    const auto* d = repr.find(n);
    check_unit(d->g_knn, "k-NN gap");
    check_unit(d->cka_ur, "CKA");
    gap += d->g_knn;
    cka += d->cka_ur;
  }
  const auto count = static_cast<double>(names.size());
  return (1.0 - gap / count) * (cka / count);
}

double compute_hlr(double agl, double agr) {
  check_unit(agl, "AGL");
  check_unit(agr, "AGR");
  if (agl == 0.0 || agr == 0.0) return 0.0;
  return 2.0 / (1.0 / agl + 1.0 / agr);
}

void LinearSvm::fit(const Matrix& x, std::span<const int> labels, const Options& opt) {
  if (x.rows() != labels.size()) throw ShapeError("svm: rows and labels differ");
  bool pos = false, neg = false;
  for (int l : labels) {
    if (l == 1) pos = true;
    else if (l == -1) neg = true;
    else throw LabelError("svm labels must be +1 or -1");
  }
  if (!pos || !neg) throw DegenerateInputError("svm training data holds a single class");
  w_.assign(x.cols(), 0.0);
  b_ = 0.0;
  const SeededRng order(opt.seed, kSvmStream);
  const double t0 = 1.0 / (opt.l2 * opt.eta0);
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const auto perm = epoch_permutation(x.rows(), order, epoch);
    for (auto i : perm) {
      const double eta = 1.0 / (opt.l2 * (t0 + static_cast<double>(t++)));
      const auto xi = x.row(i);
      const double y = labels[i];
      const double margin = y * (dot(w_, xi) + b_);
      for (auto& w : w_) w *= 1.0 - eta * opt.l2;
      if (margin < 1.0) {
        for (std::size_t j = 0; j < w_.size(); ++j) w_[j] += eta * y * xi[j];
        b_ += eta * y;
      }
    }
  }
}

double LinearSvm::decision(std::span<const double> x) const { return dot(w_, x) + b_; }

std::vector<double> max_confidence(const MlpParams& params, const Matrix& x) {
  const Matrix p = softmax_rows(forward(params, x).logits);
  std::vector<double> out(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const auto row = p.row(i);
    out[i] = *std::max_element(row.begin(), row.end());
  }
  return out;
}

std::vector<double> neg_log_complement_confidence(const MlpParams& params, const Matrix& x) {
  const Matrix z = forward(params, x).logits;
  std::vector<double> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto row = z.row(i);
    const auto top = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    double all = 0.0, rest = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double e = std::exp(row[j] - row[top]);
      all += e;
      if (j != top) rest += e;
    }
    out[i] = rest > 0.0 ? std::log(all) - std::log(rest) : std::numeric_limits<double>::infinity();
  }
  return out;
}

namespace {

std::vector<double> attack_feature(const MlpParams& params, const Matrix& x, ConfidenceScale scale) {
  auto f = scale == ConfidenceScale::Raw ? max_confidence(params, x)
                                         : neg_log_complement_confidence(params, x);
  // Clip saturated rows so standardization stays finite.
  for (auto& v : f) v = std::min(v, 745.0);
  return f;
}

}  // namespace

double mia_efficacy(const MlpParams& params, const Dataset& members, const Dataset& non_members,
                    const Dataset& forget, const MiaOptions& opt) {
  if (members.empty() || non_members.empty())
    throw DegenerateInputError("MIA needs both members and non-members");
  if (members.size() != non_members.size())
    throw ShapeError("MIA attack set must be balanced");
  if (forget.empty()) throw DegenerateInputError("MIA needs a nonempty forget set");

  const auto cm = attack_feature(params, members.x, opt.scale);
  const auto cn = attack_feature(params, non_members.x, opt.scale);
  std::vector<double> feat(cm);
  feat.insert(feat.end(), cn.begin(), cn.end());
  const double mean = std::accumulate(feat.begin(), feat.end(), 0.0) / static_cast<double>(feat.size());
  double var = 0.0;
  for (double f : feat) var += (f - mean) * (f - mean);
  double sd = std::sqrt(var / static_cast<double>(feat.size()));
  if (!(sd > 0.0)) sd = 1.0;

  const int member = opt.swap_classes ? -1 : 1;
  Matrix x(feat.size(), 1);
  std::vector<int> labels(feat.size());
  for (std::size_t i = 0; i < feat.size(); ++i) {
    x(i, 0) = (feat[i] - mean) / sd;
    labels[i] = i < cm.size() ? member : -member;
  }
  LinearSvm svm;
  svm.fit(x, labels, opt.svm);

  std::size_t non_member = 0;
  for (double c : attack_feature(params, forget.x, opt.scale)) {
    const double z[1] = {(c - mean) / sd};
    const double d = svm.decision(z);
    // The boundary point counts as non-member under either labeling.
    const bool is_non_member = opt.swap_classes ? d >= 0.0 : d <= 0.0;
    non_member += is_non_member ? 1 : 0;
  }
  return static_cast<double>(non_member) / static_cast<double>(forget.size());
}

LastLayerResult last_layer_analysis(const MlpParams& original, const MlpParams& retrained,
                                    const ForgetSplit& split, const UnlearnConfig& cfg) {
  UnlearnConfig head = cfg;
  head.base.freeze_encoder = true;
  const auto full_run = run_unlearning(original, split, cfg);
  const auto head_run = run_unlearning(original, split, head);
  const Accuracies r = split_accuracies(retrained, split);
  LastLayerResult out;
  out.cka_full_vs_head = compute_cka(forward(full_run.params, split.retain_test.x).features,
                                     forward(head_run.params, split.retain_test.x).features);
  out.agl_full = compute_agl(logit_gaps(split_accuracies(full_run.params, split), r));
  out.agl_head = compute_agl(logit_gaps(split_accuracies(head_run.params, split), r));
  out.agl_gap = std::abs(out.agl_full - out.agl_head);
  return out;
}

}  // namespace unlbench
