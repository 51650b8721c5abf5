#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "unlbench/data.hpp"
#include "unlbench/metrics.hpp"
#include "unlbench/model.hpp"
#include "unlbench/unlearning.hpp"

namespace unlbench {

inline constexpr int kConfigVersion = 1;

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::Random;
  std::size_t n_forget = 5;
  std::optional<std::string> related_dataset;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  SyntheticSpec data = SyntheticSpec::desk_default();
  ScenarioSpec scenario;
  /// Shared by the original and the retrained model; seeds are derived from master_seed.
  TrainConfig original_training;
  std::vector<UnlearnConfig> methods;
  std::uint64_t master_seed = 0;
  std::size_t repeats = 5;
  std::filesystem::path output_dir = "out";
  std::optional<std::size_t> thread_count;
  std::size_t hidden_dim = kDefaultHidden;
  std::size_t feature_dim = kDefaultFeatureDim;
  std::size_t probe_rows = 256;
  std::size_t knn_k = 5;
  bool export_features = true;

  void validate() const;
  /// Spec defaults, every approximate method with its default config, one repeat.
  static ExperimentConfig desk_default();
};

std::string experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// UNLBENCH_THREADS, then the config override, then hardware concurrency (at least 1).
std::size_t resolve_thread_count(const std::optional<std::size_t>& config_override);

struct RankedClass {
  std::size_t train_class = 0;
  double score = 0.0;
};

struct RankedClasses {
  std::vector<RankedClass> entries;
  /// Leading entries that are some downstream class's best match.
  std::size_t stage1_count = 0;

  std::vector<std::size_t> ids() const;
};

/// Ranks train classes by cosine similarity of class-mean encoder features to the downstream
/// classes: first each downstream class's best match (deduplicated, by descending score), then
/// the remaining classes by descending best similarity. Returns the first n.
RankedClasses select_top_classes(const MlpParams& reference, const Dataset& train,
                                 const Dataset& downstream, std::size_t n);

/// Fixed rows shared by every model evaluated in a scenario.
struct DownstreamProbe {
  std::string name;
  /// Full downstream dataset, used for k-NN transfer.
  Dataset data;
  /// Seeded subsample used for CKA.
  Matrix probe;
  std::uint64_t knn_seed = 0;
};

struct ScenarioContext {
  ExperimentConfig cfg;
  Universe universe;
  ForgetSplit split;
  std::optional<RankedClasses> ranking;
  ModelCheckpoint original;
  ModelCheckpoint retrained;
  std::vector<DownstreamProbe> probes;
  Dataset mia_members;
  Dataset mia_non_members;
  std::string scenario_label;
  /// Cost of producing the retrained model; zero when it was loaded rather than trained.
  double retrain_seconds = 0.0;
  std::size_t retrain_steps = 0;
  std::uint64_t retrain_sample_visits = 0;

  // Cached reference quantities.
  Accuracies retrained_acc;
  std::vector<double> retrained_knn;
  std::vector<Matrix> retrained_features;
  std::vector<Matrix> original_features;
};

/// Builds the universe, trains the original and retrained models and fixes all probes.
ScenarioContext prepare_scenario(const ExperimentConfig& cfg);

/// Context from existing artifacts (CLI eval). Probe, k-NN and MIA seeds derive from
/// cfg.master_seed exactly as in prepare_scenario.
ScenarioContext assemble_context(const ExperimentConfig& cfg, ForgetSplit split,
                                 ModelCheckpoint original, ModelCheckpoint retrained,
                                 std::vector<DownstreamDataset> downstream);

struct Evaluation {
  MetricsReport report;
  /// Probe features per downstream dataset, in probe order.
  std::vector<Matrix> features;
};

/// Fills every metric field of a report for `params` against the context's references.
Evaluation evaluate_model(const ScenarioContext& ctx, const MlpParams& params,
                          std::uint64_t mia_seed = 0);

/// Seed of a method-repeat, derived from the master seed.
std::uint64_t repeat_seed(std::uint64_t master_seed, std::size_t method_index, std::size_t repeat);

struct FeatureExport {
  std::string name;
  Matrix features;
};

struct ScenarioResult {
  std::vector<MetricsReport> reports;
  std::vector<FeatureExport> features;
};

/// Runs every method x repeat (in parallel) on a prepared context. Failures become rows with
/// status "failed".
ScenarioResult run_methods(const ScenarioContext& ctx);
/// prepare_scenario followed by run_methods.
ScenarioResult run_scenario(const ExperimentConfig& cfg);

struct SweepCell {
  double lr = 0.0;
  std::size_t epochs = 0;
  double hlr = 0.0;
  std::string status = "ok";
};

std::vector<SweepCell> sweep_hyperparameters(const ScenarioContext& ctx, const UnlearnConfig& method,
                                             const std::vector<double>& lr_grid,
                                             const std::vector<std::size_t>& epoch_grid);
std::string sweep_grid_csv(const std::vector<SweepCell>& cells);

struct NoisePoint {
  double sigma = 0.0;
  /// Mean over the AGR datasets.
  double knn_acc = 0.0;
  double cka_ur = 0.0;
  double cka_uo = 0.0;
  /// Mean 1/num_classes over the same datasets.
  double chance = 0.0;
  std::string status = "ok";
};

std::vector<NoisePoint> sweep_dp_noise(const ScenarioContext& ctx, const UnlearnConfig& method,
                                       const std::vector<double>& sigma_grid);
std::string dp_noise_csv(const std::vector<NoisePoint>& points);

/// Column names of the per-dataset CSV fields come from the first report.
std::string reports_to_csv(const std::vector<MetricsReport>& reports);
std::string reports_to_json(const std::vector<MetricsReport>& reports);
std::vector<MetricsReport> reports_from_json(const std::string& text);

/// Writes report.json, report.csv, timing.json, cka_scatter.csv and features/*.ubm1.
void emit_report(const std::vector<MetricsReport>& reports, const std::filesystem::path& output_dir,
                 const std::vector<FeatureExport>& features = {});

}  // namespace unlbench
