#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "unlbench/data.hpp"
#include "unlbench/matrix.hpp"
#include "unlbench/model.hpp"
#include "unlbench/unlearning.hpp"

namespace unlbench {

/// Accuracy fractions on Df, Dr, Df_te, Dr_te.
struct Accuracies {
  double fa = 0.0, ra = 0.0, tfa = 0.0, tra = 0.0;
};

Accuracies split_accuracies(const MlpParams& params, const ForgetSplit& split);

struct LogitGaps {
  Accuracies unlearned;
  double g_f = 0.0, g_r = 0.0, g_tf = 0.0, g_tr = 0.0;
};

/// |A(u) - A(r)| per dataset.
LogitGaps logit_gaps(const Accuracies& unlearned, const Accuracies& retrained);
/// Product of (1 - gap) over the four gaps. Throws DomainError for a gap outside [0,1].
double compute_agl(const LogitGaps& gaps);

enum class CkaForm {
  /// hsic(K,L) / sqrt(hsic(K,K) hsic(L,L)).
  Standard,
  /// hsic(K,L)^2 / (hsic(K,K)^2 hsic(L,L)^2), kept only for comparison with the printed form.
  LiteralSquared,
};

/// Linear CKA between two feature matrices over the same rows (n >= 3). Returns 0 when
/// either self-HSIC is below 1e-12.
double compute_cka(const Matrix& a, const Matrix& b, CkaForm form = CkaForm::Standard);

struct StratifiedSplit {
  /// Class-major, ascending row index within each class.
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per class, a seeded floor(20%) of rows goes to test and the rest to train.
StratifiedSplit stratified_split(std::span<const Label> labels, std::size_t num_classes,
                                 std::uint64_t seed);

/// Majority vote of the k nearest training rows under cosine distance. Distance ties go to
/// the earlier training row, vote ties to the lowest class. Zero vectors have cosine 0 to
/// everything.
std::vector<Label> knn_predict(const Matrix& train_x, std::span<const Label> train_y,
                               const Matrix& test_x, std::size_t k, std::size_t num_classes);

/// Test accuracy of knn_predict on a stratified split. Throws DegenerateInputError naming
/// any class with fewer than k+1 training rows.
double compute_knn_accuracy(const Matrix& features, std::span<const Label> labels,
                            std::size_t num_classes, std::size_t k, std::uint64_t split_seed);

struct DownstreamRepr {
  std::string name;
  double knn_acc_u = 0.0;
  double knn_acc_r = 0.0;
  double g_knn = 0.0;
  double cka_ur = 0.0;
  double cka_uo = 0.0;
};

struct ReprScores {
  std::vector<DownstreamRepr> datasets;

  const DownstreamRepr* find(const std::string& name) const noexcept;
};

enum class ScenarioKind { Random, Top };

std::string_view scenario_kind_name(ScenarioKind k) noexcept;
ScenarioKind parse_scenario_kind(std::string_view s);

/// Names of the downstream datasets AGR averages over for the scenario.
std::vector<std::string> agr_datasets(const ReprScores& repr, ScenarioKind kind,
                                      const std::optional<std::string>& related);
/// (1 - mean G_kNN) * mean CKA_ur over agr_datasets().
double compute_agr(const ReprScores& repr, ScenarioKind kind,
                   const std::optional<std::string>& related);

/// Harmonic mean of AGL and AGR; 0 when either is 0. Inputs must lie in [0,1].
double compute_hlr(double agl, double agr);

/// Linear SVM on hinge loss with L2 penalty, trained by seeded SGD.
class LinearSvm {
 public:
  struct Options {
    std::size_t epochs = 200;
    double l2 = 1e-3;
    double eta0 = 0.1;
    std::uint64_t seed = 0;
  };

  /// Labels are +1 / -1; both classes must be present.
  void fit(const Matrix& x, std::span<const int> labels, const Options& opt);
  double decision(std::span<const double> x) const;

  const std::vector<double>& weights() const noexcept { return w_; }
  double bias() const noexcept { return b_; }

 private:
  std::vector<double> w_;
  double b_ = 0.0;
};

/// Scale the max-confidence feature is presented on. Raw p saturates at 1 for confident models,
/// so the default uses -log(1 - p), computed from the logits without cancellation.
enum class ConfidenceScale { Raw, NegLogComplement };

struct MiaOptions {
  LinearSvm::Options svm;
  ConfidenceScale scale = ConfidenceScale::NegLogComplement;
  /// Train with non-members as the positive class; the result must not change.
  bool swap_classes = false;
};

/// Max softmax confidence per row.
std::vector<double> max_confidence(const MlpParams& params, const Matrix& x);
/// -log(1 - max softmax confidence) per row; +inf only when every other logit underflows.
std::vector<double> neg_log_complement_confidence(const MlpParams& params, const Matrix& x);

/// Fraction of `forget` rows an SVM on the standardized confidence feature classifies as non-members.
/// The attack is trained on members = `members`, non-members = `non_members`.
double mia_efficacy(const MlpParams& params, const Dataset& members, const Dataset& non_members,
                    const Dataset& forget, const MiaOptions& opt = {});

struct LastLayerResult {
  double cka_full_vs_head = 0.0;
  double agl_full = 0.0;
  double agl_head = 0.0;
  double agl_gap = 0.0;
};

/// Runs the method once as configured and once with the encoder frozen, then compares the
/// two unlearned models' features on Dr_te.
LastLayerResult last_layer_analysis(const MlpParams& original, const MlpParams& retrained,
                                    const ForgetSplit& split, const UnlearnConfig& cfg);

struct MetricsReport {
  std::string method;
  /// original | retrained | unlearned
  std::string role;
  std::string scenario;
  std::uint64_t seed = 0;
  std::size_t repeat = 0;
  /// ok | failed
  std::string status = "ok";
  std::string error;
  LogitGaps gaps;
  ReprScores repr;
  std::vector<std::string> agr_datasets;
  double agl = 0.0;
  double agr = 0.0;
  double hlr = 0.0;
  double mia_efficacy = 0.0;
  std::uint64_t rte_sample_visits = 0;
  std::size_t rte_steps = 0;
  /// Wall clock; kept out of report.json so that file stays reproducible.
  double rte_seconds = 0.0;
  std::string params_hash;
  std::string centroid_hash;
  std::vector<std::string> warnings;
};

}  // namespace unlbench
