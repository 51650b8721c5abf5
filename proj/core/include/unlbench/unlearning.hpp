#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unlbench/data.hpp"
#include "unlbench/matrix.hpp"
#include "unlbench/model.hpp"

namespace unlbench {

enum class Method { FT, GA, RL, PL, SalUn, DUCK, CU, SCRUB, SCAR, Retrain };

inline constexpr std::array<Method, 9> kApproximateMethods = {
    Method::FT, Method::GA, Method::RL, Method::PL, Method::SalUn,
    Method::DUCK, Method::CU, Method::SCRUB, Method::SCAR};

std::string_view method_name(Method m) noexcept;
/// Case-insensitive; throws ConfigError on unknown names.
Method parse_method(std::string_view name);
/// True for methods that read the retain set during unlearning.
bool uses_retain_set(Method m) noexcept;

struct UnlearnConfig {
  Method method = Method::FT;
  TrainConfig base;
  double saliency_fraction = 0.5;
  double distill_temperature = 2.0;
  double contrast_temperature = 0.5;
  double retain_loss_weight = 1.0;
  std::size_t scrub_max_steps_per_epoch = 1;
  std::size_t scrub_min_steps_per_epoch = 1;
  double covariance_shrinkage = 0.1;

  void validate() const;
};

/// Flat JSON object: "method" plus any TrainConfig or UnlearnConfig field. Missing fields
/// take the method's defaults.
std::string unlearn_config_to_json(const UnlearnConfig& cfg);
UnlearnConfig unlearn_config_from_json(const std::string& text);

/// Desk-scale defaults for a method (learning rate, epoch cap, momentum).
UnlearnConfig default_unlearn_config(Method m);

struct UnlearnResult {
  MlpParams params;
  std::size_t steps = 0;
  /// Training-sample forward passes through the model being updated.
  std::uint64_t sample_visits = 0;
  std::string centroid_hash;
  std::size_t skipped_anchors = 0;
  std::vector<std::string> warnings;
};

UnlearnResult unlearn_ft(const MlpParams& original, const Dataset& retain, const UnlearnConfig& cfg);
UnlearnResult unlearn_ga(const MlpParams& original, const Dataset& forget, const UnlearnConfig& cfg);
UnlearnResult unlearn_rl(const MlpParams& original, const Dataset& forget, const UnlearnConfig& cfg);
UnlearnResult unlearn_pl(const MlpParams& original, const Dataset& forget,
                         std::span<const std::size_t> forget_classes, const UnlearnConfig& cfg);
UnlearnResult unlearn_salun(const MlpParams& original, const Dataset& forget,
                            const UnlearnConfig& cfg);
UnlearnResult unlearn_duck(const MlpParams& original, const Dataset& forget, const Dataset& retain,
                           const UnlearnConfig& cfg);
UnlearnResult unlearn_cu(const MlpParams& original, const Dataset& forget, const Dataset& retain,
                         const UnlearnConfig& cfg);
UnlearnResult unlearn_scrub(const MlpParams& original, const Dataset& forget, const Dataset& retain,
                            const UnlearnConfig& cfg);
UnlearnResult unlearn_scar(const MlpParams& original, const Dataset& forget, const Dataset& retain,
                           const UnlearnConfig& cfg);
/// Fresh Glorot initialization from base.seed, then sgd_train on the retain set only.
UnlearnResult retrain_gold(std::size_t input_dim, std::size_t hidden_dim, std::size_t feature_dim,
                           std::size_t num_classes, const Dataset& retain, const TrainConfig& base);

/// Dispatches on cfg.method.
UnlearnResult run_unlearning(const MlpParams& original, const ForgetSplit& split,
                             const UnlearnConfig& cfg);

// ---- building blocks, exposed for testing ----

/// Per-sample label drawn uniformly from the other num_classes - 1 classes.
std::vector<Label> random_relabels(std::span<const Label> labels, std::size_t num_classes,
                                   SeededRng& rng);

/// Argmax over non-forget logits (ties to the lowest index). Throws ConfigError when every
/// class is forgotten.
std::vector<Label> pseudo_labels(const Matrix& logits, std::span<const std::size_t> forget_classes);

/// Selects the top ceil(fraction * P) coordinates by |grad|, ties to the lower flat index
/// (blocks in W1, b1, W2, b2, Whead, bhead order).
ParamMask saliency_mask(const MlpParams& grads, double fraction);

struct Centroids {
  std::vector<std::size_t> classes;
  /// One row per entry of `classes`.
  Matrix means;
  /// Inverse shrunk covariance; empty for Euclidean distance.
  Matrix precision;
  /// Shrinkage actually applied (may be raised to 1 on SPD failure).
  double shrinkage = 0.0;

  std::string hash() const;
};

/// Per-retained-class mean encoder features of `params` on `retain`.
Centroids compute_centroids(const MlpParams& params, const Dataset& retain);

/// Pooled within-class covariance of features about their class means.
Matrix pooled_covariance(const Matrix& features, std::span<const Label> labels,
                         const Centroids& centroids);
/// (1 - lambda) S + lambda diag(S).
Matrix shrink_covariance(const Matrix& cov, double lambda);
/// Installs a Mahalanobis precision built from `cov` and `lambda`. Non-SPD results fall back
/// to lambda = 1 (and a variance floor if still singular), recording warnings.
void attach_precision(Centroids& c, const Matrix& cov, double lambda,
                      std::vector<std::string>& warnings);

/// (f - m)^T P (f - m), or squared Euclidean when P is empty.
double squared_distance(std::span<const double> f, std::span<const double> m, const Matrix& precision);
/// Index into centroids.classes of the closest centroid; ties to the lower index.
std::size_t nearest_centroid(std::span<const double> f, const Centroids& c);

/// Contrastive term for one anchor:
/// -log( sum_pos exp(cos(a,z)/tau) / sum_all exp(cos(a,z)/tau) ).
/// Gradients (optional) are accumulated into d_anchor and d_candidates rows, scaled by `scale`.
double contrastive_anchor_loss(std::span<const double> anchor, const Matrix& candidates,
                               const std::vector<bool>& positive, double tau,
                               std::span<double> d_anchor = {}, Matrix* d_candidates = nullptr,
                               double scale = 1.0);

/// Mean over rows of KL(p_teacher || p_student) for temperature-scaled softmaxes.
double distill_kl(const Matrix& teacher_logits, const Matrix& student_logits, double temperature);
/// d distill_kl / d student_logits.
Matrix distill_kl_grad(const Matrix& teacher_logits, const Matrix& student_logits,
                       double temperature);

/// Distance-realignment engine shared by DUCK (Euclidean) and SCAR (Mahalanobis): mean
/// squared distance of forget features to their nearest frozen centroid plus a weighted
/// retain cross-entropy. Epochs iterate over retain minibatches paired with cycled forget
/// minibatches.
UnlearnResult realign_to_centroids(const MlpParams& original, const Dataset& forget,
                                   const Dataset& retain, const UnlearnConfig& cfg,
                                   const Centroids& centroids);

}  // namespace unlbench
