#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unlbench/matrix.hpp"

namespace unlbench {

using Label = std::uint32_t;

/// A downstream dataset analog. Downstream class i < anchor_classes.size() is tied to
/// train class anchor_classes[i]; the remaining classes get fresh prototypes.
struct DownstreamSpec {
  std::string name;
  std::size_t num_classes = 0;
  std::vector<std::size_t> anchor_classes;
  double anchor_similarity = 0.0;
  std::size_t per_class = 50;
  /// Per-sample noise; falls back to the universe's class_noise_sigma.
  std::optional<double> noise_sigma;

  void validate(std::size_t num_train_classes) const;
};

struct SyntheticSpec {
  std::size_t ambient_dim = 32;
  std::size_t num_train_classes = 20;
  std::size_t per_class_train = 100;
  std::size_t per_class_test = 50;
  double class_noise_sigma = 0.25;
  std::uint64_t prototype_seed = 7;
  std::vector<DownstreamSpec> downstream_specs;

  void validate() const;

  /// Default universe with the three downstream analogs ("oh-like", "cub-like", "dn-like").
  static SyntheticSpec desk_default();
};

struct Dataset {
  Matrix x;
  std::vector<Label> y;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return y.size(); }
  bool empty() const noexcept { return y.empty(); }
  void validate() const;
  std::vector<std::size_t> class_counts() const;
};

/// Rows of `ds` whose label satisfies keep[label].
Dataset filter_classes(const Dataset& ds, const std::vector<bool>& keep);
Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);
/// Seeded subsample of min(n, size) rows, in ascending row order.
Dataset sample_rows(const Dataset& ds, std::size_t n, std::uint64_t seed);

struct DownstreamDataset {
  std::string name;
  Dataset data;
  Matrix prototypes;
  std::vector<std::size_t> anchor_classes;
};

struct Universe {
  Dataset train;
  Dataset test;
  std::vector<DownstreamDataset> downstream;
  /// One unit-norm prototype per train class (rows).
  Matrix prototypes;

  const DownstreamDataset& downstream_named(const std::string& name) const;
};

/// Pure function of the spec: same spec gives bit-identical datasets.
Universe generate_universe(const SyntheticSpec& spec);

double cosine_similarity(std::span<const double> a, std::span<const double> b) noexcept;

struct ForgetSplit {
  std::vector<std::size_t> forget_classes;
  std::vector<std::size_t> retain_classes;
  Dataset forget_train;
  Dataset retain_train;
  Dataset forget_test;
  Dataset retain_test;

  std::size_t num_classes() const noexcept { return retain_train.num_classes; }
  std::vector<bool> forget_mask() const;
};

/// Partitions train/test by an explicit forget set (kept in the given order).
ForgetSplit make_forget_split(const Dataset& train, const Dataset& test,
                              std::vector<std::size_t> forget_classes);
ForgetSplit split_random_forget(const Dataset& train, const Dataset& test, std::size_t n_forget,
                                std::uint64_t seed);
ForgetSplit split_top_forget(const Dataset& train, const Dataset& test, std::size_t n_forget,
                             std::span<const std::size_t> ranked_classes);

// Persistence: a dataset directory holds X.ubm1, y.u32 (u64 count + u32 labels, LE) and
// manifest.json.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds,
                  const std::string& manifest_extra_json = "{}");
Dataset load_dataset(const std::filesystem::path& dir);

std::vector<std::uint8_t> encode_labels(std::span<const Label> labels);
std::vector<Label> decode_labels(std::span<const std::uint8_t> bytes);

/// Universe directory: train/, test/, downstream/<name>/, prototypes.ubm1, manifest.json.
void save_universe(const std::filesystem::path& dir, const Universe& u, const SyntheticSpec& spec);
Universe load_universe(const std::filesystem::path& dir);

/// Split directory: df/, dr/, df_te/, dr_te/ plus split.json with the class lists.
void save_split(const std::filesystem::path& dir, const ForgetSplit& split);
ForgetSplit load_split(const std::filesystem::path& dir);

std::string synthetic_spec_to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const std::string& text);

}  // namespace unlbench
