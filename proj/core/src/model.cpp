#include "unlbench/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unlbench/errors.hpp"
#include "unlbench/hash.hpp"

namespace unlbench {

namespace {

constexpr std::uint64_t kOrderStream = 0x0DE2;
constexpr std::uint64_t kNoiseStream = 0x7015E;
constexpr std::uint64_t kInitStream = 0x1417;

void add_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias(0, j);
  }
}

Matrix relu(const Matrix& m) {
  Matrix out = m;
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Matrix column_sums(const Matrix& m) {
  Matrix s(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) s(0, j) += m(i, j);
  return s;
}

void relu_backward_inplace(Matrix& grad, const Matrix& pre) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(pre.values()[i] > 0.0)) grad.values()[i] = 0.0;
}

Matrix glorot_matrix(std::size_t fan_in, std::size_t fan_out, SeededRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (auto& v : w.values()) v = rng.uniform(-limit, limit);
  return w;
}

}  // namespace

std::size_t MlpParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto* b : blocks()) n += b->size();
  return n;
}

std::array<Matrix*, MlpParams::kBlockCount> MlpParams::blocks() noexcept {
  return {&w1, &b1, &w2, &b2, &w_head, &b_head};
}

std::array<const Matrix*, MlpParams::kBlockCount> MlpParams::blocks() const noexcept {
  return {&w1, &b1, &w2, &b2, &w_head, &b_head};
}

void MlpParams::validate() const {
  const std::size_t in = w1.rows(), hid = w1.cols(), feat = w2.cols(), C = w_head.cols();
  const bool ok = in > 0 && hid > 0 && feat > 0 && C > 0 && b1.rows() == 1 && b1.cols() == hid &&
                  w2.rows() == hid && b2.rows() == 1 && b2.cols() == feat && w_head.rows() == feat &&
                  b_head.rows() == 1 && b_head.cols() == C;
  if (!ok) throw ShapeError("inconsistent MLP parameter shapes");
  for (std::size_t i = 0; i < kBlockCount; ++i)
    if (!all_finite(*blocks()[i]))
      throw DomainError("non-finite entry in parameter block " + std::string(kBlockNames[i]));
}

MlpParams MlpParams::zeros(std::size_t in, std::size_t hidden, std::size_t feat, std::size_t classes) {
  return {Matrix(in, hidden),  Matrix(1, hidden),  Matrix(hidden, feat),
          Matrix(1, feat),     Matrix(feat, classes), Matrix(1, classes)};
}

MlpParams MlpParams::zeros_like(const MlpParams& like) {
  return zeros(like.input_dim(), like.hidden_dim(), like.feature_dim(), like.num_classes());
}

MlpParams MlpParams::glorot(std::size_t in, std::size_t hidden, std::size_t feat,
                            std::size_t classes, SeededRng& rng) {
  MlpParams p = zeros(in, hidden, feat, classes);
  p.w1 = glorot_matrix(in, hidden, rng);
  p.w2 = glorot_matrix(hidden, feat, rng);
  p.w_head = glorot_matrix(feat, classes, rng);
  return p;
}

MlpParams initial_params(std::size_t input_dim, std::size_t hidden_dim, std::size_t feature_dim,
                         std::size_t num_classes, std::uint64_t seed) {
  SeededRng rng(seed, kInitStream);
  return MlpParams::glorot(input_dim, hidden_dim, feature_dim, num_classes, rng);
}

bool encoder_equal(const MlpParams& a, const MlpParams& b) noexcept {
  return a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2;
}

std::string params_hash(const MlpParams& p) {
  Fnv1a h;
  for (const auto* b : p.blocks()) {
    const std::uint64_t dims[2] = {b->rows(), b->cols()};
    h.update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(dims), sizeof dims));
    h.update(b->values());
  }
  return h.hex();
}

ForwardCache forward_cached(const MlpParams& params, const Matrix& x) {
  if (x.cols() != params.input_dim())
    throw ShapeError("forward: input has " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(params.input_dim()));
  ForwardCache c;
  c.pre1 = matmul(x, params.w1);
  add_bias(c.pre1, params.b1);
  c.h1 = relu(c.pre1);
  c.pre2 = matmul(c.h1, params.w2);
  add_bias(c.pre2, params.b2);
  c.features = relu(c.pre2);
  c.logits = matmul(c.features, params.w_head);
  add_bias(c.logits, params.b_head);
  return c;
}

ForwardResult forward(const MlpParams& params, const Matrix& x) {
  auto c = forward_cached(params, x);
  return {std::move(c.features), std::move(c.logits)};
}

MlpParams backward(const MlpParams& params, const ForwardCache& cache, const Matrix& x,
                   const Matrix& d_logits, const Matrix& d_features, bool freeze_encoder) {
  MlpParams g = MlpParams::zeros_like(params);
  const std::size_t n = x.rows();
  Matrix d_feat(n, params.feature_dim());
  if (!d_logits.empty()) {
    if (d_logits.rows() != n || d_logits.cols() != params.num_classes())
      throw ShapeError("backward: logits gradient has the wrong shape");
    g.w_head = matmul_tn(cache.features, d_logits);
    g.b_head = column_sums(d_logits);
    d_feat = matmul_nt(d_logits, params.w_head);
  }
  if (!d_features.empty()) {
    if (d_features.rows() != n || d_features.cols() != params.feature_dim())
      throw ShapeError("backward: feature gradient has the wrong shape");
    for (std::size_t i = 0; i < d_feat.size(); ++i) d_feat.values()[i] += d_features.values()[i];
  }
  if (freeze_encoder) return g;

  relu_backward_inplace(d_feat, cache.pre2);
  g.w2 = matmul_tn(cache.h1, d_feat);
  g.b2 = column_sums(d_feat);
  Matrix d_h1 = matmul_nt(d_feat, params.w2);
  relu_backward_inplace(d_h1, cache.pre1);
  g.w1 = matmul_tn(x, d_h1);
  g.b1 = column_sums(d_h1);
  return g;
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto in = logits.row(i);
    auto out = p.row(i);
    const double mx = *std::max_element(in.begin(), in.end()) / temperature;
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = std::exp(in[j] / temperature - mx);
      z += out[j];
    }
    for (auto& v : out) v /= z;
  }
  return p;
}

double cross_entropy(const Matrix& logits, std::span<const Label> labels) {
  if (logits.rows() != labels.size()) throw ShapeError("cross_entropy: label count mismatch");
  if (labels.empty()) throw DegenerateInputError("cross_entropy of an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    if (labels[i] >= row.size()) throw LabelError("label " + std::to_string(labels[i]) + " >= C");
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    total += mx + std::log(z) - row[labels[i]];
  }
  return total / static_cast<double>(labels.size());
}

Matrix cross_entropy_grad(const Matrix& logits, std::span<const Label> labels) {
  if (logits.rows() != labels.size()) throw ShapeError("cross_entropy_grad: label count mismatch");
  if (labels.empty()) throw DegenerateInputError("cross_entropy_grad of an empty batch");
  Matrix g = softmax_rows(logits);
  const double inv_n = 1.0 / static_cast<double>(labels.size());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    if (labels[i] >= g.cols()) throw LabelError("label " + std::to_string(labels[i]) + " >= C");
    g(i, labels[i]) -= 1.0;
    for (auto& v : g.row(i)) v *= inv_n;
  }
  return g;
}

MlpParams grad_cross_entropy(const MlpParams& params, const Matrix& x, std::span<const Label> y,
                             bool freeze_encoder) {
  if (y.empty()) throw DegenerateInputError("grad_cross_entropy needs a nonempty batch");
  if (x.rows() != y.size()) throw ShapeError("grad_cross_entropy: label count mismatch");
  for (auto label : y)
    if (label >= params.num_classes())
      throw LabelError("label " + std::to_string(label) + " >= num_classes " +
                       std::to_string(params.num_classes()));
  const auto cache = forward_cached(params, x);
  return backward(params, cache, x, cross_entropy_grad(cache.logits, y), Matrix(), freeze_encoder);
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (!(grad_noise_sigma >= 0.0) || !std::isfinite(grad_noise_sigma))
    throw ConfigError("grad_noise_sigma must be finite and >= 0");
}

std::string TrainConfig::hash() const {
  Fnv1a h;
  h.update(train_config_to_json(*this));
  return h.hex();
}

std::size_t ParamMask::selected() const noexcept {
  std::size_t n = 0;
  for (const auto& b : blocks) n += static_cast<std::size_t>(std::count(b.begin(), b.end(), true));
  return n;
}

SgdOptimizer::SgdOptimizer(const MlpParams& shape, const TrainConfig& cfg)
    : cfg_(cfg), velocity_(MlpParams::zeros_like(shape)), noise_rng_(cfg.seed, kNoiseStream) {}

void SgdOptimizer::step(MlpParams& params, const MlpParams& grads, double direction,
                        const ParamMask* mask) {
  auto pblocks = params.blocks();
  const auto gblocks = grads.blocks();
  auto vblocks = velocity_.blocks();
  const std::size_t first = cfg_.freeze_encoder ? MlpParams::kEncoderBlocks : 0;
  const double m = cfg_.momentum;
  for (std::size_t b = first; b < MlpParams::kBlockCount; ++b) {
    auto theta = pblocks[b]->values();
    const auto g = gblocks[b]->values();
    auto v = vblocks[b]->values();
    const std::vector<bool>* sel = mask ? &mask->blocks[b] : nullptr;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (sel && !(*sel)[i]) continue;
      double gi = direction * g[i];
      if (cfg_.grad_noise_sigma > 0.0) gi += cfg_.grad_noise_sigma * noise_rng_.normal();
      double update = gi;
      if (m > 0.0) {
        v[i] = m * v[i] + gi;
        update = cfg_.nesterov ? gi + m * v[i] : v[i];
      }
      theta[i] -= cfg_.lr * update;
    }
  }
  ++steps_;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, const SeededRng& order_rng,
                                           std::size_t epoch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  SeededRng rng = order_rng.derive(epoch);
  rng.shuffle(std::span<std::size_t>(idx));
  return idx;
}

MlpParams sgd_train(MlpParams params, const Dataset& data, const TrainConfig& cfg,
                    TrainStats* stats) {
  cfg.validate();
  params.validate();
  TrainStats local;
  if (cfg.epochs == 0 || cfg.lr == 0.0) {
    if (stats) *stats = local;
    return params;
  }
  if (data.empty()) throw DegenerateInputError("sgd_train on an empty dataset");
  const SeededRng order_rng(cfg.seed, kOrderStream);
  SgdOptimizer opt(params, cfg);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_permutation(data.size(), order_rng, epoch);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Matrix xb = select_rows(data.x, rows);
      std::vector<Label> yb;
      yb.reserve(rows.size());
      for (auto r : rows) yb.push_back(data.y[r]);
      const auto cache = forward_cached(params, xb);
      const double loss = cross_entropy(cache.logits, yb);
      if (!std::isfinite(loss)) throw DivergenceError("non-finite training loss", local.steps);
      const auto grads = backward(params, cache, xb, cross_entropy_grad(cache.logits, yb), Matrix(),
                                  cfg.freeze_encoder);
      opt.step(params, grads);
      ++local.steps;
      local.sample_visits += rows.size();
      local.final_loss = loss;
    }
  }
  if (stats) *stats = local;
  return params;
}

std::vector<Label> argmax_rows(const Matrix& logits) {
  std::vector<Label> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
      if (row[j] > row[best]) best = j;
    out[i] = static_cast<Label>(best);
  }
  return out;
}

std::vector<Label> predict(const MlpParams& params, const Matrix& x) {
  return argmax_rows(forward(params, x).logits);
}

double accuracy(const MlpParams& params, const Dataset& data) {
  if (data.empty()) throw DegenerateInputError("accuracy of an empty dataset");
  const auto pred = predict(params, data.x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.y[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace unlbench
