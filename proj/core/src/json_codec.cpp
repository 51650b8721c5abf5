#include "json_codec.hpp"

#include <set>

#include "unlbench/errors.hpp"

namespace unlbench {

namespace {

// Reads fields from a JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j_.is_object()) throw ConfigError(what_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(what_ + "." + key + ": " + e.what());
    }
  }

  void get_optional(const char* key, std::optional<std::string>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    std::string s;
    get(key, s);
    out = s;
  }

  void get_optional(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    double v = 0.0;
    get(key, v);
    out = v;
  }

  void get_optional(const char* key, std::optional<std::size_t>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    std::size_t v = 0;
    get(key, v);
    out = v;
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) throw ConfigError(what_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const Json& j_;
  std::string what_;
  std::set<std::string, std::less<>> seen_;
};

void read_train_fields(ObjectReader& r, TrainConfig& c) {
  r.get("lr", c.lr);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("momentum", c.momentum);
  r.get("nesterov", c.nesterov);
  r.get("seed", c.seed);
  r.get("grad_noise_sigma", c.grad_noise_sigma);
  r.get("freeze_encoder", c.freeze_encoder);
}

void write_train_fields(Json& j, const TrainConfig& c) {
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["momentum"] = c.momentum;
  j["nesterov"] = c.nesterov;
  j["seed"] = c.seed;
  j["grad_noise_sigma"] = c.grad_noise_sigma;
  j["freeze_encoder"] = c.freeze_encoder;
}

Json accuracies_json(const Accuracies& a) {
  return Json{{"fa", a.fa}, {"ra", a.ra}, {"tfa", a.tfa}, {"tra", a.tra}};
}

template <typename T>
T field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(std::string("report field '") + key + "' missing");
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("report field '") + key + "': " + e.what());
  }
}

}  // namespace

Json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(what + ": invalid JSON: " + e.what());
  }
}

Json to_json(const DownstreamSpec& s) {
  Json j;
  j["name"] = s.name;
  j["num_classes"] = s.num_classes;
  j["anchor_classes"] = s.anchor_classes;
  j["anchor_similarity"] = s.anchor_similarity;
  j["per_class"] = s.per_class;
  j["noise_sigma"] = s.noise_sigma ? Json(*s.noise_sigma) : Json(nullptr);
  return j;
}

DownstreamSpec downstream_spec_from(const Json& j) {
  ObjectReader r(j, "downstream spec");
  DownstreamSpec s;
  r.get("name", s.name);
  r.get("num_classes", s.num_classes);
  r.get("anchor_classes", s.anchor_classes);
  r.get("anchor_similarity", s.anchor_similarity);
  r.get("per_class", s.per_class);
  r.get_optional("noise_sigma", s.noise_sigma);
  r.finish();
  return s;
}

Json to_json(const SyntheticSpec& s) {
  Json j;
  j["ambient_dim"] = s.ambient_dim;
  j["num_train_classes"] = s.num_train_classes;
  j["per_class_train"] = s.per_class_train;
  j["per_class_test"] = s.per_class_test;
  j["class_noise_sigma"] = s.class_noise_sigma;
  j["prototype_seed"] = s.prototype_seed;
  Json ds = Json::array();
  for (const auto& d : s.downstream_specs) ds.push_back(to_json(d));
  j["downstream_specs"] = ds;
  return j;
}

SyntheticSpec synthetic_spec_from(const Json& j) {
  ObjectReader r(j, "data");
  SyntheticSpec s = SyntheticSpec::desk_default();
  r.get("ambient_dim", s.ambient_dim);
  r.get("num_train_classes", s.num_train_classes);
  r.get("per_class_train", s.per_class_train);
  r.get("per_class_test", s.per_class_test);
  r.get("class_noise_sigma", s.class_noise_sigma);
  r.get("prototype_seed", s.prototype_seed);
  if (const Json* ds = r.child("downstream_specs")) {
    if (!ds->is_array()) throw ConfigError("data.downstream_specs must be an array");
    s.downstream_specs.clear();
    for (const auto& d : *ds) s.downstream_specs.push_back(downstream_spec_from(d));
  }
  r.finish();
  return s;
}

Json to_json(const TrainConfig& c) {
  Json j;
  write_train_fields(j, c);
  return j;
}

TrainConfig train_config_from(const Json& j, const TrainConfig& defaults) {
  ObjectReader r(j, "training config");
  TrainConfig c = defaults;
  read_train_fields(r, c);
  r.finish();
  c.validate();
  return c;
}

Json to_json(const UnlearnConfig& c) {
  Json j;
  j["method"] = std::string(method_name(c.method));
  write_train_fields(j, c.base);
  j["saliency_fraction"] = c.saliency_fraction;
  j["distill_temperature"] = c.distill_temperature;
  j["contrast_temperature"] = c.contrast_temperature;
  j["retain_loss_weight"] = c.retain_loss_weight;
  j["scrub_max_steps_per_epoch"] = c.scrub_max_steps_per_epoch;
  j["scrub_min_steps_per_epoch"] = c.scrub_min_steps_per_epoch;
  j["covariance_shrinkage"] = c.covariance_shrinkage;
  return j;
}

UnlearnConfig unlearn_config_from(const Json& j) {
  if (j.is_string()) return default_unlearn_config(parse_method(j.get<std::string>()));
  ObjectReader r(j, "method config");
  std::string name;
  r.get("method", name);
  if (name.empty()) throw ConfigError("method config needs a 'method' name");
  UnlearnConfig c = default_unlearn_config(parse_method(name));
  read_train_fields(r, c.base);
  r.get("saliency_fraction", c.saliency_fraction);
  r.get("distill_temperature", c.distill_temperature);
  r.get("contrast_temperature", c.contrast_temperature);
  r.get("retain_loss_weight", c.retain_loss_weight);
  r.get("scrub_max_steps_per_epoch", c.scrub_max_steps_per_epoch);
  r.get("scrub_min_steps_per_epoch", c.scrub_min_steps_per_epoch);
  r.get("covariance_shrinkage", c.covariance_shrinkage);
  r.finish();
  c.validate();
  return c;
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["version"] = c.version;
  j["data"] = to_json(c.data);
  Json sc;
  sc["kind"] = std::string(scenario_kind_name(c.scenario.kind));
  sc["n_forget"] = c.scenario.n_forget;
  sc["related_dataset"] = c.scenario.related_dataset ? Json(*c.scenario.related_dataset) : Json(nullptr);
  j["scenario"] = sc;
  j["original_training"] = to_json(c.original_training);
  Json methods = Json::array();
  for (const auto& m : c.methods) methods.push_back(to_json(m));
  j["methods"] = methods;
  j["master_seed"] = c.master_seed;
  j["repeats"] = c.repeats;
  j["output_dir"] = c.output_dir.generic_string();
  j["thread_count"] = c.thread_count ? Json(*c.thread_count) : Json(nullptr);
  j["hidden_dim"] = c.hidden_dim;
  j["feature_dim"] = c.feature_dim;
  j["probe_rows"] = c.probe_rows;
  j["knn_k"] = c.knn_k;
  j["export_features"] = c.export_features;
  return j;
}

ExperimentConfig experiment_config_from(const Json& j) {
  ObjectReader r(j, "experiment config");
  ExperimentConfig c;
  c.methods.clear();
  if (r.child("version") == nullptr) throw ConfigError("experiment config needs a 'version' field");
  r.get("version", c.version);
  if (c.version != kConfigVersion)
    throw ConfigError("unsupported config version " + std::to_string(c.version));
  if (const Json* d = r.child("data")) c.data = synthetic_spec_from(*d);
  if (const Json* s = r.child("scenario")) {
    ObjectReader sr(*s, "scenario");
    std::string kind = "random";
    sr.get("kind", kind);
    c.scenario.kind = parse_scenario_kind(kind);
    sr.get("n_forget", c.scenario.n_forget);
    sr.get_optional("related_dataset", c.scenario.related_dataset);
    sr.finish();
  }
  if (const Json* t = r.child("original_training")) c.original_training = train_config_from(*t);
  if (const Json* m = r.child("methods")) {
    if (!m->is_array()) throw ConfigError("methods must be an array");
    for (const auto& e : *m) c.methods.push_back(unlearn_config_from(e));
  }
  r.get("master_seed", c.master_seed);
  r.get("repeats", c.repeats);
  std::string out = c.output_dir.generic_string();
  r.get("output_dir", out);
  c.output_dir = out;
  r.get_optional("thread_count", c.thread_count);
  r.get("hidden_dim", c.hidden_dim);
  r.get("feature_dim", c.feature_dim);
  r.get("probe_rows", c.probe_rows);
  r.get("knn_k", c.knn_k);
  r.get("export_features", c.export_features);
  r.finish();
  c.validate();
  return c;
}

Json to_json(const MetricsReport& r) {
  Json j;
  j["method"] = r.method;
  j["role"] = r.role;
  j["scenario"] = r.scenario;
  j["seed"] = r.seed;
  j["repeat"] = r.repeat;
  j["status"] = r.status;
  j["error"] = r.error;
  j["accuracy"] = accuracies_json(r.gaps.unlearned);
  j["gaps"] = Json{{"forget", r.gaps.g_f},
                   {"retain", r.gaps.g_r},
                   {"forget_test", r.gaps.g_tf},
                   {"retain_test", r.gaps.g_tr}};
  Json repr = Json::array();
  for (const auto& d : r.repr.datasets)
    repr.push_back(Json{{"name", d.name},
                        {"knn_acc_u", d.knn_acc_u},
                        {"knn_acc_r", d.knn_acc_r},
                        {"g_knn", d.g_knn},
                        {"cka_ur", d.cka_ur},
                        {"cka_uo", d.cka_uo}});
  j["representation"] = repr;
  j["agr_datasets"] = r.agr_datasets;
  j["agl"] = r.agl;
  j["agr"] = r.agr;
  j["hlr"] = r.hlr;
  j["mia_efficacy"] = r.mia_efficacy;
  j["rte_sample_visits"] = r.rte_sample_visits;
  j["rte_steps"] = r.rte_steps;
  j["params_hash"] = r.params_hash;
  j["centroid_hash"] = r.centroid_hash;
  j["warnings"] = r.warnings;
  return j;
}

MetricsReport metrics_report_from(const Json& j) {
  MetricsReport r;
  r.method = field<std::string>(j, "method");
  r.role = field<std::string>(j, "role");
  r.scenario = field<std::string>(j, "scenario");
  r.seed = field<std::uint64_t>(j, "seed");
  r.repeat = field<std::size_t>(j, "repeat");
  r.status = field<std::string>(j, "status");
  r.error = field<std::string>(j, "error");
  const Json acc = field<Json>(j, "accuracy");
  r.gaps.unlearned = {field<double>(acc, "fa"), field<double>(acc, "ra"), field<double>(acc, "tfa"),
                      field<double>(acc, "tra")};
  const Json gaps = field<Json>(j, "gaps");
  r.gaps.g_f = field<double>(gaps, "forget");
  r.gaps.g_r = field<double>(gaps, "retain");
  r.gaps.g_tf = field<double>(gaps, "forget_test");
  r.gaps.g_tr = field<double>(gaps, "retain_test");
  for (const auto& d : field<Json>(j, "representation"))
    r.repr.datasets.push_back({field<std::string>(d, "name"), field<double>(d, "knn_acc_u"),
                               field<double>(d, "knn_acc_r"), field<double>(d, "g_knn"),
                               field<double>(d, "cka_ur"), field<double>(d, "cka_uo")});
  r.agr_datasets = field<std::vector<std::string>>(j, "agr_datasets");
  r.agl = field<double>(j, "agl");
  r.agr = field<double>(j, "agr");
  r.hlr = field<double>(j, "hlr");
  r.mia_efficacy = field<double>(j, "mia_efficacy");
  r.rte_sample_visits = field<std::uint64_t>(j, "rte_sample_visits");
  r.rte_steps = field<std::size_t>(j, "rte_steps");
  r.params_hash = field<std::string>(j, "params_hash");
  r.centroid_hash = field<std::string>(j, "centroid_hash");
  r.warnings = field<std::vector<std::string>>(j, "warnings");
  return r;
}

std::string train_config_to_json(const TrainConfig& cfg) { return to_json(cfg).dump(); }

TrainConfig train_config_from_json(const std::string& text) {
  return train_config_from(parse_json_text(text, "training config"));
}

std::string unlearn_config_to_json(const UnlearnConfig& cfg) { return to_json(cfg).dump(2); }

UnlearnConfig unlearn_config_from_json(const std::string& text) {
  return unlearn_config_from(parse_json_text(text, "method config"));
}

std::string synthetic_spec_to_json(const SyntheticSpec& spec) { return to_json(spec).dump(2); }

SyntheticSpec synthetic_spec_from_json(const std::string& text) {
  const Json j = parse_json_text(text, "data spec");
  // Accept either a bare spec or a full experiment config carrying one under "data".
  if (j.is_object() && j.contains("version")) {
    if (const auto it = j.find("data"); it != j.end()) return synthetic_spec_from(*it);
    return SyntheticSpec::desk_default();
  }
  return synthetic_spec_from(j);
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

ExperimentConfig experiment_config_from_json(const std::string& text) {
  return experiment_config_from(parse_json_text(text, "experiment config"));
}

}  // namespace unlbench
