// unlbench: command-line front end for the unlearning testbed.
//
// Exit codes: 0 success, 1 configuration error, 2 any other failure.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "unlbench/data.hpp"
#include "unlbench/errors.hpp"
#include "unlbench/harness.hpp"
#include "unlbench/hash.hpp"
#include "unlbench/metrics.hpp"
#include "unlbench/model.hpp"
#include "unlbench/unlearning.hpp"

namespace fs = std::filesystem;
using namespace unlbench;
using Json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

std::string read_config_text(const fs::path& path) {
  try {
    return read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
}

void print_json(const Json& j) { std::cout << j.dump(2) << '\n'; }

struct GenDataArgs {
  std::string config, out;
};

int cmd_gen_data(const GenDataArgs& a) {
  const SyntheticSpec spec = synthetic_spec_from_json(read_config_text(a.config));
  const Universe u = generate_universe(spec);
  save_universe(a.out, u, spec);
  std::cout << "wrote universe: " << u.train.size() << " train, " << u.test.size() << " test rows, "
            << u.downstream.size() << " downstream datasets -> " << a.out << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string data, out, config;
  std::uint64_t seed = 0;
  std::size_t hidden = kDefaultHidden, feature = kDefaultFeatureDim;
  bool retain_only = false;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = train_config_from_json(read_config_text(a.config));
  cfg.seed = a.seed;
  // A universe directory trains on train/; a split directory trains on dr/ (retrained model).
  Dataset data;
  std::string role = "original";
  if (a.retain_only) {
    data = load_split(a.data).retain_train;
    role = "retrained";
  } else {
    data = fs::exists(fs::path(a.data) / "train") ? load_universe(a.data).train : load_dataset(a.data);
  }
  TrainStats stats;
  ModelCheckpoint ckpt;
  ckpt.params = sgd_train(initial_params(data.x.cols(), a.hidden, a.feature, data.num_classes, cfg.seed),
                          data, cfg, &stats);
  ckpt.provenance = {cfg.seed, cfg.hash(), "", role, ""};
  save_checkpoint(a.out, ckpt);
  std::cout << role << " model: " << stats.steps << " steps, final loss " << stats.final_loss
            << ", train accuracy " << accuracy(ckpt.params, data) << " -> " << a.out << '\n';
  return kExitOk;
}

struct SplitArgs {
  std::string data, out, kind = "random", model, related;
  std::size_t n = 5;
  std::uint64_t seed = 0;
};

int cmd_split(const SplitArgs& a) {
  const Universe u = load_universe(a.data);
  const ScenarioKind kind = parse_scenario_kind(a.kind);
  ForgetSplit split;
  if (kind == ScenarioKind::Top) {
    if (a.model.empty() || a.related.empty())
      throw ConfigError("top split needs --model and --related");
    const auto ranking = select_top_classes(load_checkpoint(a.model).params, u.train,
                                            u.downstream_named(a.related).data, u.train.num_classes);
    split = split_top_forget(u.train, u.test, a.n, ranking.ids());
  } else {
    split = split_random_forget(u.train, u.test, a.n, a.seed);
  }
  save_split(a.out, split);
  Json j;
  j["forget_classes"] = split.forget_classes;
  j["df_rows"] = split.forget_train.size();
  j["dr_rows"] = split.retain_train.size();
  print_json(j);
  return kExitOk;
}

struct UnlearnArgs {
  std::string method, original, split, config, out;
  std::uint64_t seed = 0;
};

int cmd_unlearn(const UnlearnArgs& a) {
  UnlearnConfig cfg = default_unlearn_config(parse_method(a.method));
  if (!a.config.empty()) {
    Json j = Json::parse(read_config_text(a.config), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ConfigError(a.config + ": expected a JSON object");
    if (j.contains("method") && parse_method(j["method"].get<std::string>()) != cfg.method)
      throw ConfigError("--method disagrees with the config's method");
    j["method"] = std::string(method_name(cfg.method));
    cfg = unlearn_config_from_json(j.dump());
  }
  cfg.base.seed = a.seed;
  const ModelCheckpoint original = load_checkpoint(a.original);
  const ForgetSplit split = load_split(a.split);
  const UnlearnResult res = run_unlearning(original.params, split, cfg);
  ModelCheckpoint out;
  out.params = res.params;
  Fnv1a h;
  h.update(unlearn_config_to_json(cfg));
  out.provenance = {cfg.base.seed, h.hex(), params_hash(original.params),
                    cfg.method == Method::Retrain ? "retrained"
                                                  : "unlearned:" + std::string(method_name(cfg.method)),
                    res.centroid_hash};
  save_checkpoint(a.out, out);
  write_text_file(fs::path(a.out) / "unlearn_config.json", unlearn_config_to_json(cfg) + "\n");
  Json j;
  j["method"] = std::string(method_name(cfg.method));
  j["steps"] = res.steps;
  j["sample_visits"] = res.sample_visits;
  j["warnings"] = res.warnings;
  print_json(j);
  return kExitOk;
}

struct SelectTopArgs {
  std::string model, train, downstream;
  std::size_t n = 0;
};

int cmd_select_top(const SelectTopArgs& a) {
  const ModelCheckpoint m = load_checkpoint(a.model);
  const Dataset train = fs::exists(fs::path(a.train) / "train") ? load_universe(a.train).train
                                                                 : load_dataset(a.train);
  const auto ranking = select_top_classes(m.params, train, load_dataset(a.downstream), a.n);
  Json j;
  j["stage1_count"] = ranking.stage1_count;
  Json entries = Json::array();
  for (const auto& e : ranking.entries) entries.push_back(Json{{"class", e.train_class}, {"score", e.score}});
  j["ranking"] = entries;
  print_json(j);
  return kExitOk;
}

struct EvalArgs {
  std::string unlearned, retrained, original, split, scenario = "random", related, out;
  std::vector<std::string> downstreams;
  std::uint64_t seed = 0;
  std::size_t probe_rows = 256, knn_k = 5;
};

int cmd_eval(const EvalArgs& a) {
  ExperimentConfig cfg;
  cfg.master_seed = a.seed;
  cfg.probe_rows = a.probe_rows;
  cfg.knn_k = a.knn_k;
  cfg.scenario.kind = parse_scenario_kind(a.scenario);
  if (!a.related.empty()) cfg.scenario.related_dataset = a.related;
  std::vector<DownstreamDataset> downstream;
  for (const auto& dir : a.downstreams) {
    DownstreamDataset d;
    d.data = load_dataset(dir);
    const Json m = Json::parse(read_text_file(fs::path(dir) / "manifest.json"));
    d.name = m.contains("extra") && m["extra"].contains("name") ? m["extra"]["name"].get<std::string>()
                                                                : fs::path(dir).filename().string();
    downstream.push_back(std::move(d));
  }
  const ModelCheckpoint unlearned = load_checkpoint(a.unlearned);
  const ScenarioContext ctx = assemble_context(cfg, load_split(a.split), load_checkpoint(a.original),
                                               load_checkpoint(a.retrained), std::move(downstream));
  Evaluation ev = evaluate_model(ctx, unlearned.params, a.seed);
  ev.report.method = unlearned.provenance.role;
  ev.report.role = "unlearned";
  ev.report.seed = unlearned.provenance.seed;
  const std::string json = reports_to_json({ev.report});
  if (!a.out.empty()) write_text_file(a.out, json);
  std::cout << json;
  return kExitOk;
}

struct RunArgs {
  std::string config, out;
};

int cmd_run(const RunArgs& a) {
  ExperimentConfig cfg = load_experiment_config(a.config);
  if (!a.out.empty()) cfg.output_dir = a.out;
  const ScenarioResult res = run_scenario(cfg);
  emit_report(res.reports, cfg.output_dir, res.features);
  std::size_t failed = 0;
  for (const auto& r : res.reports) {
    if (r.status != "ok") ++failed;
    std::cout << r.method << (r.role == "unlearned" ? " r" + std::to_string(r.repeat) : std::string())
              << ": " << r.status << "  AGL " << r.agl << "  AGR " << r.agr << "  H-LR " << r.hlr
              << "  MIA " << r.mia_efficacy << '\n';
  }
  std::cout << res.reports.size() << " rows (" << failed << " failed) -> " << cfg.output_dir.string()
            << '\n';
  return kExitOk;
}

struct SweepArgs {
  std::string config, kind, method, out;
  std::vector<double> lrs, sigmas;
  std::vector<std::size_t> epochs;
};

int cmd_sweep(const SweepArgs& a) {
  ExperimentConfig cfg = load_experiment_config(a.config);
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (cfg.methods.empty()) throw ConfigError("sweep needs at least one method in the config");
  std::size_t index = 0;
  if (!a.method.empty()) {
    const Method m = parse_method(a.method);
    while (index < cfg.methods.size() && cfg.methods[index].method != m) ++index;
    if (index == cfg.methods.size()) throw ConfigError("method " + a.method + " is not in the config");
  }
  UnlearnConfig method = cfg.methods[index];
  method.base.seed = repeat_seed(cfg.master_seed, index, 0);
  const ScenarioContext ctx = prepare_scenario(cfg);
  fs::create_directories(cfg.output_dir);
  if (a.kind == "lr-epochs") {
    const auto lrs = a.lrs.empty() ? std::vector<double>{method.base.lr * 0.5, method.base.lr, method.base.lr * 2}
                                   : a.lrs;
    const auto eps = a.epochs.empty() ? std::vector<std::size_t>{method.base.epochs / 2 + 1, method.base.epochs,
                                                                 method.base.epochs * 2}
                                      : a.epochs;
    const std::string csv = sweep_grid_csv(sweep_hyperparameters(ctx, method, lrs, eps));
    write_text_file(cfg.output_dir / "sweep_lr_epochs.csv", csv);
    std::cout << csv;
  } else if (a.kind == "dp-noise") {
    const auto sigmas = a.sigmas.empty() ? std::vector<double>{0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0} : a.sigmas;
    const std::string csv = dp_noise_csv(sweep_dp_noise(ctx, method, sigmas));
    write_text_file(cfg.output_dir / "sweep_dp_noise.csv", csv);
    std::cout << csv;
  } else {
    throw ConfigError("--kind must be lr-epochs or dp-noise");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale machine unlearning testbed"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate the synthetic universe");
  c_gen->add_option("--config", gen.config, "Data spec or experiment config (JSON)")->required();
  c_gen->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a model from scratch");
  c_train->add_option("--data", train.data, "Universe or dataset directory (split directory with --retain-only)")->required();
  c_train->add_option("--out", train.out, "Checkpoint directory")->required();
  c_train->add_option("--config", train.config, "Training config (JSON)");
  c_train->add_option("--seed", train.seed, "Seed");
  c_train->add_option("--hidden", train.hidden, "Hidden width");
  c_train->add_option("--feature", train.feature, "Feature width");
  c_train->add_flag("--retain-only", train.retain_only, "Train the retrained model on a split's dr/");

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "Partition a universe into forget and retain sets");
  c_split->add_option("--data", split.data, "Universe directory")->required();
  c_split->add_option("--out", split.out, "Split directory")->required();
  c_split->add_option("--n", split.n, "Number of forget classes")->required();
  c_split->add_option("--kind", split.kind, "random or top");
  c_split->add_option("--seed", split.seed, "Seed for random selection");
  c_split->add_option("--model", split.model, "Reference checkpoint for top selection");
  c_split->add_option("--related", split.related, "Related downstream dataset for top selection");

  UnlearnArgs un;
  auto* c_un = app.add_subcommand("unlearn", "Run one unlearning method");
  c_un->add_option("--method", un.method, "FT, GA, RL, PL, SalUn, DUCK, CU, SCRUB, SCAR or RETRAIN")->required();
  c_un->add_option("--original", un.original, "Original checkpoint")->required();
  c_un->add_option("--split", un.split, "Split directory")->required();
  c_un->add_option("--config", un.config, "Method config (JSON)");
  c_un->add_option("--seed", un.seed, "Seed");
  c_un->add_option("--out", un.out, "Output checkpoint")->required();

  SelectTopArgs sel;
  auto* c_sel = app.add_subcommand("select-top", "Rank train classes by similarity to a downstream dataset");
  c_sel->add_option("--model", sel.model, "Reference checkpoint")->required();
  c_sel->add_option("--train", sel.train, "Universe or train dataset directory")->required();
  c_sel->add_option("--downstream", sel.downstream, "Downstream dataset directory")->required();
  c_sel->add_option("--n", sel.n, "Number of classes")->required();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate an unlearned checkpoint");
  c_eval->add_option("--unlearned", ev.unlearned, "Unlearned checkpoint")->required();
  c_eval->add_option("--retrained", ev.retrained, "Retrained checkpoint")->required();
  c_eval->add_option("--original", ev.original, "Original checkpoint")->required();
  c_eval->add_option("--split", ev.split, "Split directory")->required();
  c_eval->add_option("--downstreams", ev.downstreams, "Downstream dataset directories")->required();
  c_eval->add_option("--scenario", ev.scenario, "random or top");
  c_eval->add_option("--related", ev.related, "Related downstream dataset (top)");
  c_eval->add_option("--seed", ev.seed, "Seed for probes, k-NN split and MIA");
  c_eval->add_option("--probe-rows", ev.probe_rows, "CKA probe rows");
  c_eval->add_option("--knn-k", ev.knn_k, "k for k-NN");
  c_eval->add_option("--out", ev.out, "Write the report JSON here as well");

  RunArgs run;
  auto* c_run = app.add_subcommand("run", "Run a full scenario from an experiment config");
  c_run->add_option("--config", run.config, "Experiment config (JSON)")->required();
  c_run->add_option("--out", run.out, "Override output_dir");

  SweepArgs sw;
  auto* c_sw = app.add_subcommand("sweep", "Hyperparameter or DP-noise sweep");
  c_sw->add_option("--config", sw.config, "Experiment config (JSON)")->required();
  c_sw->add_option("--kind", sw.kind, "lr-epochs or dp-noise")->required();
  c_sw->add_option("--method", sw.method, "Method to sweep (default: first in config)");
  c_sw->add_option("--lrs", sw.lrs, "Learning-rate grid");
  c_sw->add_option("--epochs", sw.epochs, "Epoch grid");
  c_sw->add_option("--sigmas", sw.sigmas, "Noise grid");
  c_sw->add_option("--out", sw.out, "Override output_dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*c_gen) return cmd_gen_data(gen);
    if (*c_train) return cmd_train(train);
    if (*c_split) return cmd_split(split);
    if (*c_un) return cmd_unlearn(un);
    if (*c_sel) return cmd_select_top(sel);
    if (*c_eval) return cmd_eval(ev);
    if (*c_run) return cmd_run(run);
    if (*c_sw) return cmd_sweep(sw);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
