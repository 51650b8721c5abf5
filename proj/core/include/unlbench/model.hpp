#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "unlbench/data.hpp"
#include "unlbench/matrix.hpp"
#include "unlbench/rng.hpp"

namespace unlbench {

inline constexpr std::size_t kDefaultHidden = 64;
inline constexpr std::size_t kDefaultFeatureDim = 16;

/// Encoder x -> ReLU(x W1 + b1) -> ReLU(. W2 + b2) = features, then a linear head.
/// Biases are 1 x n matrices.
struct MlpParams {
  Matrix w1, b1, w2, b2, w_head, b_head;

  static constexpr std::size_t kBlockCount = 6;
  static constexpr std::size_t kEncoderBlocks = 4;
  static constexpr std::array<std::string_view, kBlockCount> kBlockNames = {
      "W1", "b1", "W2", "b2", "Whead", "bhead"};

  std::size_t input_dim() const noexcept { return w1.rows(); }
  std::size_t hidden_dim() const noexcept { return w1.cols(); }
  std::size_t feature_dim() const noexcept { return w2.cols(); }
  std::size_t num_classes() const noexcept { return w_head.cols(); }
  std::size_t parameter_count() const noexcept;

  std::array<Matrix*, kBlockCount> blocks() noexcept;
  std::array<const Matrix*, kBlockCount> blocks() const noexcept;

  /// Throws ShapeError / DomainError on inconsistent dimensions or non-finite entries.
  void validate() const;

  /// All-zero parameters of the same shape as `like`.
  static MlpParams zeros_like(const MlpParams& like);
  static MlpParams zeros(std::size_t in, std::size_t hidden, std::size_t feat, std::size_t classes);
  /// Glorot-uniform weights, zero biases.
  static MlpParams glorot(std::size_t in, std::size_t hidden, std::size_t feat,
                          std::size_t classes, SeededRng& rng);

  bool operator==(const MlpParams&) const = default;
};

bool encoder_equal(const MlpParams& a, const MlpParams& b) noexcept;
/// Fingerprint of every parameter bit.
std::string params_hash(const MlpParams& p);

struct ForwardResult {
  Matrix features;
  Matrix logits;
};

/// Intermediate activations kept for backpropagation.
struct ForwardCache {
  Matrix pre1, h1, pre2, features, logits;
};

ForwardResult forward(const MlpParams& params, const Matrix& x);
ForwardCache forward_cached(const MlpParams& params, const Matrix& x);

/// Backpropagates upstream gradients on logits and/or features (either may be empty)
/// through the network. Encoder blocks are left zero when freeze_encoder is set.
MlpParams backward(const MlpParams& params, const ForwardCache& cache, const Matrix& x,
                   const Matrix& d_logits, const Matrix& d_features, bool freeze_encoder);

/// Row-wise softmax of logits / temperature.
Matrix softmax_rows(const Matrix& logits, double temperature = 1.0);
/// Mean natural-log cross-entropy.
double cross_entropy(const Matrix& logits, std::span<const Label> labels);
/// d(mean CE)/d logits.
Matrix cross_entropy_grad(const Matrix& logits, std::span<const Label> labels);

/// Gradient of mean cross-entropy over the batch.
MlpParams grad_cross_entropy(const MlpParams& params, const Matrix& x, std::span<const Label> y,
                             bool freeze_encoder);

struct TrainConfig {
  double lr = 0.05;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double momentum = 0.9;
  bool nesterov = false;
  std::uint64_t seed = 0;
  double grad_noise_sigma = 0.0;
  bool freeze_encoder = false;

  void validate() const;
  /// Fingerprint of every field.
  std::string hash() const;
};

/// Per-coordinate update mask over all parameter blocks.
struct ParamMask {
  std::array<std::vector<bool>, MlpParams::kBlockCount> blocks;
  std::size_t selected() const noexcept;
};

/// SGD with optional (Nesterov) momentum and Gaussian gradient noise:
/// g' = g + sigma*N(0,1); v = m v + g'; step = nesterov ? g' + m v : v; theta -= lr * step.
class SgdOptimizer {
 public:
  SgdOptimizer(const MlpParams& shape, const TrainConfig& cfg);

  /// `direction` is +1 for descent, -1 for ascent. Coordinates outside `mask`
  /// (when given) and frozen encoder blocks are never touched.
  void step(MlpParams& params, const MlpParams& grads, double direction = 1.0,
            const ParamMask* mask = nullptr);

  std::size_t steps() const noexcept { return steps_; }

 private:
  TrainConfig cfg_;
  MlpParams velocity_;
  SeededRng noise_rng_;
  std::size_t steps_ = 0;
};

/// Seeded per-epoch permutation of [0, n).
std::vector<std::size_t> epoch_permutation(std::size_t n, const SeededRng& order_rng,
                                           std::size_t epoch);

struct TrainStats {
  std::size_t steps = 0;
  std::uint64_t sample_visits = 0;
  double final_loss = 0.0;
};

/// Glorot initialization drawn from the model-init stream of `seed`.
MlpParams initial_params(std::size_t input_dim, std::size_t hidden_dim, std::size_t feature_dim,
                         std::size_t num_classes, std::uint64_t seed);

/// epochs * ceil(N / batch) minibatch steps of mean-CE descent.
MlpParams sgd_train(MlpParams params, const Dataset& data, const TrainConfig& cfg,
                    TrainStats* stats = nullptr);

/// Argmax of each logits row; ties go to the lowest class index.
std::vector<Label> argmax_rows(const Matrix& logits);
std::vector<Label> predict(const MlpParams& params, const Matrix& x);
double accuracy(const MlpParams& params, const Dataset& data);

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string parent_hash;
  /// original | retrained | unlearned:<method>
  std::string role;
  /// Fingerprint of frozen centroids (distance-based methods only).
  std::string centroid_hash;
};

struct ModelCheckpoint {
  MlpParams params;
  Provenance provenance;
};

/// Directory of UBM1 tensors (W1.ubm1 ... bhead.ubm1) plus manifest.json.
void save_checkpoint(const std::filesystem::path& dir, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& dir);

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace unlbench
