#pragma once

// Private JSON codecs shared by the persistence and configuration code.

#include <json.hpp>

#include "unlbench/data.hpp"
#include "unlbench/harness.hpp"
#include "unlbench/metrics.hpp"
#include "unlbench/model.hpp"
#include "unlbench/unlearning.hpp"

namespace unlbench {

using Json = nlohmann::ordered_json;

Json to_json(const DownstreamSpec& s);
DownstreamSpec downstream_spec_from(const Json& j);
Json to_json(const SyntheticSpec& s);
SyntheticSpec synthetic_spec_from(const Json& j);

Json to_json(const TrainConfig& c);
TrainConfig train_config_from(const Json& j, const TrainConfig& defaults = {});

Json to_json(const UnlearnConfig& c);
UnlearnConfig unlearn_config_from(const Json& j);

Json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from(const Json& j);

Json to_json(const MetricsReport& r);
MetricsReport metrics_report_from(const Json& j);

/// Parses text, mapping syntax errors to ConfigError.
Json parse_json_text(const std::string& text, const std::string& what);

}  // namespace unlbench
