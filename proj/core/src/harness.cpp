#include "unlbench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <thread>

#include "json_codec.hpp"
#include "unlbench/errors.hpp"
#include "unlbench/rng.hpp"

namespace unlbench {

namespace {

// Tags for seeds derived from the master seed.
constexpr std::uint64_t kOriginalTag = 0x0816;
constexpr std::uint64_t kRetrainTag = 0x8E78;
constexpr std::uint64_t kSplitTag = 0x5911;
constexpr std::uint64_t kProbeTag = 0x9B0E;
constexpr std::uint64_t kKnnTag = 0xC110;
constexpr std::uint64_t kMiaTag = 0x41A;
constexpr std::uint64_t kMethodTag = 0xA110;

// Runs fn(0..n-1) on up to `threads` workers. Each index is processed exactly once; callers
// write results by index so the outcome never depends on scheduling.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

Matrix class_means(const Matrix& features, std::span<const Label> labels, std::size_t num_classes,
                   std::vector<bool>& present) {
  Matrix means(num_classes, features.cols());
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    ++counts.at(labels[i]);
    auto m = means.row(labels[i]);
    const auto f = features.row(i);
    for (std::size_t j = 0; j < f.size(); ++j) m[j] += f[j];
  }
  present.assign(num_classes, false);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) continue;
    present[c] = true;
    for (auto& v : means.row(c)) v /= static_cast<double>(counts[c]);
  }
  return means;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

void ExperimentConfig::validate() const {
  if (version != kConfigVersion) throw ConfigError("unsupported config version " + std::to_string(version));
  data.validate();
  if (scenario.n_forget < 1 || scenario.n_forget >= data.num_train_classes)
    throw ConfigError("scenario.n_forget must lie in [1, num_train_classes)");
  if (scenario.kind == ScenarioKind::Top) {
    if (!scenario.related_dataset) throw ConfigError("top scenario needs scenario.related_dataset");
    const bool known = std::any_of(data.downstream_specs.begin(), data.downstream_specs.end(),
                                   [&](const auto& d) { return d.name == *scenario.related_dataset; });
    if (!known)
      throw ConfigError("scenario.related_dataset '" + *scenario.related_dataset +
                        "' is not a downstream dataset");
  }
  if (data.downstream_specs.empty()) throw ConfigError("at least one downstream dataset is required");
  original_training.validate();
  for (const auto& m : methods) m.validate();
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (thread_count && *thread_count < 1) throw ConfigError("thread_count must be >= 1");
  if (hidden_dim < 1 || feature_dim < 1) throw ConfigError("model dimensions must be positive");
  if (probe_rows < 3) throw ConfigError("probe_rows must be >= 3");
  if (knn_k < 1) throw ConfigError("knn_k must be >= 1");
}

ExperimentConfig ExperimentConfig::desk_default() {
  ExperimentConfig c;
  c.repeats = 1;
  for (auto m : kApproximateMethods) c.methods.push_back(default_unlearn_config(m));
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return experiment_config_from_json(text);
}

std::size_t resolve_thread_count(const std::optional<std::size_t>& config_override) {
  if (const char* env = std::getenv("UNLBENCH_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError(std::string("UNLBENCH_THREADS must be a positive integer, got '") + env + "'");
    return static_cast<std::size_t>(v);
  }
  if (config_override) return *config_override;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

std::vector<std::size_t> RankedClasses::ids() const {
  std::vector<std::size_t> out;
  for (const auto& e : entries) out.push_back(e.train_class);
  return out;
}

RankedClasses select_top_classes(const MlpParams& reference, const Dataset& train,
                                 const Dataset& downstream, std::size_t n) {
  const std::size_t C = train.num_classes;
  if (n > C) throw BoundsError("cannot select " + std::to_string(n) + " of " + std::to_string(C) + " classes");
  std::vector<bool> train_present, ds_present;
  const Matrix tm = class_means(forward(reference, train.x).features, train.y, C, train_present);
  const Matrix dm = class_means(forward(reference, downstream.x).features, downstream.y,
                                downstream.num_classes, ds_present);

  Matrix sim(C, downstream.num_classes);
  for (std::size_t t = 0; t < C; ++t)
    for (std::size_t d = 0; d < downstream.num_classes; ++d)
      sim(t, d) = (train_present[t] && ds_present[d]) ? cosine_similarity(tm.row(t), dm.row(d)) : -1.0;

  std::vector<bool> taken(C, false);
  std::vector<RankedClass> stage1;
  for (std::size_t d = 0; d < downstream.num_classes; ++d) {
    if (!ds_present[d]) continue;
    std::size_t best = 0;
    for (std::size_t t = 1; t < C; ++t)
      if (sim(t, d) > sim(best, d)) best = t;
    if (taken[best]) {
      for (auto& e : stage1)
        if (e.train_class == best) e.score = std::max(e.score, sim(best, d));
      continue;
    }
    taken[best] = true;
    stage1.push_back({best, sim(best, d)});
  }
  std::stable_sort(stage1.begin(), stage1.end(),
                   [](const RankedClass& a, const RankedClass& b) { return a.score > b.score; });

  std::vector<RankedClass> stage2;
  for (std::size_t t = 0; t < C; ++t) {
    if (taken[t]) continue;
    double best = -1.0;
    for (std::size_t d = 0; d < downstream.num_classes; ++d) best = std::max(best, sim(t, d));
    stage2.push_back({t, best});
  }
  std::stable_sort(stage2.begin(), stage2.end(),
                   [](const RankedClass& a, const RankedClass& b) { return a.score > b.score; });

  RankedClasses out;
  out.stage1_count = std::min(stage1.size(), n);
  out.entries = std::move(stage1);
  out.entries.insert(out.entries.end(), stage2.begin(), stage2.end());
  out.entries.resize(n);
  return out;
}

std::uint64_t repeat_seed(std::uint64_t master_seed, std::size_t method_index, std::size_t repeat) {
  return derive_seed(derive_seed(master_seed, kMethodTag + method_index), repeat);
}

namespace {

void finish_context(ScenarioContext& ctx, const std::vector<DownstreamDataset>& downstream) {
  const auto& cfg = ctx.cfg;
  for (std::size_t d = 0; d < downstream.size(); ++d) {
    DownstreamProbe p;
    p.name = downstream[d].name;
    p.data = downstream[d].data;
    p.probe = sample_rows(p.data, cfg.probe_rows, derive_seed(cfg.master_seed, kProbeTag + d)).x;
    p.knn_seed = derive_seed(cfg.master_seed, kKnnTag + d);
    ctx.probes.push_back(std::move(p));
  }

  const std::size_t m = std::min(ctx.split.retain_train.size(), ctx.split.retain_test.size());
  ctx.mia_members = sample_rows(ctx.split.retain_train, m, derive_seed(cfg.master_seed, kMiaTag));
  ctx.mia_non_members = sample_rows(ctx.split.retain_test, m, derive_seed(cfg.master_seed, kMiaTag + 1));

  ctx.retrained_acc = split_accuracies(ctx.retrained.params, ctx.split);
  for (const auto& p : ctx.probes) {
    const Matrix full = forward(ctx.retrained.params, p.data.x).features;
    ctx.retrained_knn.push_back(compute_knn_accuracy(full, p.data.y, p.data.num_classes, cfg.knn_k, p.knn_seed));
    ctx.retrained_features.push_back(forward(ctx.retrained.params, p.probe).features);
    ctx.original_features.push_back(forward(ctx.original.params, p.probe).features);
  }
}

}  // namespace

ScenarioContext prepare_scenario(const ExperimentConfig& cfg) {
  cfg.validate();
  ScenarioContext ctx;
  ctx.cfg = cfg;
  ctx.universe = generate_universe(cfg.data);
  const auto& u = ctx.universe;
  const std::size_t in = cfg.data.ambient_dim;
  const std::size_t C = cfg.data.num_train_classes;

  TrainConfig orig_cfg = cfg.original_training;
  orig_cfg.seed = derive_seed(cfg.master_seed, kOriginalTag);
  ctx.original.params =
      sgd_train(initial_params(in, cfg.hidden_dim, cfg.feature_dim, C, orig_cfg.seed), u.train, orig_cfg);
  ctx.original.provenance = {orig_cfg.seed, orig_cfg.hash(), "", "original", ""};

  const std::uint64_t split_seed = derive_seed(cfg.master_seed, kSplitTag);
  if (cfg.scenario.kind == ScenarioKind::Top) {
    ctx.ranking = select_top_classes(ctx.original.params, u.train,
                                     u.downstream_named(*cfg.scenario.related_dataset).data, C);
    ctx.split = split_top_forget(u.train, u.test, cfg.scenario.n_forget, ctx.ranking->ids());
    ctx.scenario_label = "top-" + std::to_string(cfg.scenario.n_forget) + ":" + *cfg.scenario.related_dataset;
  } else {
    ctx.split = split_random_forget(u.train, u.test, cfg.scenario.n_forget, split_seed);
    ctx.scenario_label = "random-" + std::to_string(cfg.scenario.n_forget);
  }

  TrainConfig retrain_cfg = cfg.original_training;
  retrain_cfg.seed = derive_seed(cfg.master_seed, kRetrainTag);
  const auto start = std::chrono::steady_clock::now();
  const auto retrained = retrain_gold(in, cfg.hidden_dim, cfg.feature_dim, C, ctx.split.retain_train, retrain_cfg);
  ctx.retrain_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ctx.retrain_steps = retrained.steps;
  ctx.retrain_sample_visits = retrained.sample_visits;
  ctx.retrained.params = retrained.params;
  ctx.retrained.provenance = {retrain_cfg.seed, retrain_cfg.hash(), "", "retrained", ""};

  finish_context(ctx, u.downstream);
  return ctx;
}

ScenarioContext assemble_context(const ExperimentConfig& cfg, ForgetSplit split,
                                 ModelCheckpoint original, ModelCheckpoint retrained,
                                 std::vector<DownstreamDataset> downstream) {
  ScenarioContext ctx;
  ctx.cfg = cfg;
  if (downstream.empty()) throw ConfigError("evaluation needs at least one downstream dataset");
  if (cfg.scenario.kind == ScenarioKind::Top) {
    if (!cfg.scenario.related_dataset) throw ConfigError("top scenario needs a related dataset");
    const bool known = std::any_of(downstream.begin(), downstream.end(),
                                   [&](const auto& d) { return d.name == *cfg.scenario.related_dataset; });
    if (!known) throw ConfigError("related dataset '" + *cfg.scenario.related_dataset + "' not given");
  }
  ctx.split = std::move(split);
  ctx.original = std::move(original);
  ctx.retrained = std::move(retrained);
  ctx.scenario_label = std::string(scenario_kind_name(cfg.scenario.kind)) + "-" +
                       std::to_string(ctx.split.forget_classes.size());
  if (cfg.scenario.kind == ScenarioKind::Top) ctx.scenario_label += ":" + *cfg.scenario.related_dataset;
  finish_context(ctx, downstream);
  ctx.universe.downstream = std::move(downstream);
  return ctx;
}

Evaluation evaluate_model(const ScenarioContext& ctx, const MlpParams& params, std::uint64_t mia_seed) {
  Evaluation ev;
  auto& r = ev.report;
  r.scenario = ctx.scenario_label;
  r.gaps = logit_gaps(split_accuracies(params, ctx.split), ctx.retrained_acc);
  for (std::size_t d = 0; d < ctx.probes.size(); ++d) {
    const auto& p = ctx.probes[d];
    DownstreamRepr rep;
    rep.name = p.name;
    const Matrix full = forward(params, p.data.x).features;
    rep.knn_acc_u = compute_knn_accuracy(full, p.data.y, p.data.num_classes, ctx.cfg.knn_k, p.knn_seed);
    rep.knn_acc_r = ctx.retrained_knn[d];
    rep.g_knn = std::abs(rep.knn_acc_u - rep.knn_acc_r);
    Matrix feats = forward(params, p.probe).features;
    rep.cka_ur = compute_cka(feats, ctx.retrained_features[d]);
    rep.cka_uo = compute_cka(feats, ctx.original_features[d]);
    r.repr.datasets.push_back(rep);
    ev.features.push_back(std::move(feats));
  }
  r.agr_datasets = agr_datasets(r.repr, ctx.cfg.scenario.kind, ctx.cfg.scenario.related_dataset);
  r.agl = compute_agl(r.gaps);
  r.agr = compute_agr(r.repr, ctx.cfg.scenario.kind, ctx.cfg.scenario.related_dataset);
  r.hlr = compute_hlr(r.agl, r.agr);
  MiaOptions mia;
  mia.svm.seed = mia_seed;
  r.mia_efficacy = mia_efficacy(params, ctx.mia_members, ctx.mia_non_members, ctx.split.forget_train, mia);
  r.params_hash = params_hash(params);
  return ev;
}

ScenarioResult run_methods(const ScenarioContext& ctx) {
  const auto& cfg = ctx.cfg;
  ScenarioResult out;
  const bool export_features = cfg.export_features;
  auto add_features = [&](const std::string& label, std::vector<Matrix>& feats) {
    if (!export_features) return;
    for (std::size_t d = 0; d < feats.size(); ++d)
      out.features.push_back({label + "__" + ctx.probes[d].name, std::move(feats[d])});
  };

  const std::uint64_t ref_mia_seed = derive_seed(cfg.master_seed, kMiaTag + 2);
  for (const auto* ckpt : {&ctx.original, &ctx.retrained}) {
    Evaluation ev = evaluate_model(ctx, ckpt->params, ref_mia_seed);
    ev.report.method = ckpt == &ctx.original ? "ORIGINAL" : "RETRAIN";
    ev.report.role = ckpt->provenance.role;
    ev.report.seed = ckpt->provenance.seed;
    if (ckpt == &ctx.retrained) {
      ev.report.rte_seconds = ctx.retrain_seconds;
      ev.report.rte_steps = ctx.retrain_steps;
      ev.report.rte_sample_visits = ctx.retrain_sample_visits;
    }
    out.reports.push_back(std::move(ev.report));
    add_features(ckpt->provenance.role, ev.features);
  }

  const std::size_t jobs = cfg.methods.size() * cfg.repeats;
  std::vector<Evaluation> results(jobs);
  parallel_for(jobs, resolve_thread_count(cfg.thread_count), [&](std::size_t job) {
    const std::size_t mi = job / cfg.repeats;
    const std::size_t rep = job % cfg.repeats;
    UnlearnConfig ucfg = cfg.methods[mi];
    ucfg.base.seed = repeat_seed(cfg.master_seed, mi, rep);
    Evaluation& ev = results[job];
    auto& r = ev.report;
    const auto start = std::chrono::steady_clock::now();
    try {
      UnlearnResult res = run_unlearning(ctx.original.params, ctx.split, ucfg);
      r.rte_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      ev = evaluate_model(ctx, res.params, ucfg.base.seed);
      r.rte_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      r.rte_sample_visits = res.sample_visits;
      r.rte_steps = res.steps;
      r.centroid_hash = res.centroid_hash;
      r.warnings = res.warnings;
    } catch (const std::exception& e) {
      r = MetricsReport{};
      r.status = "failed";
      r.error = e.what();
      r.scenario = ctx.scenario_label;
      r.rte_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      ev.features.clear();
    }
    r.method = std::string(method_name(ucfg.method));
    r.role = "unlearned";
    r.seed = ucfg.base.seed;
    r.repeat = rep;
  });
  for (std::size_t job = 0; job < jobs; ++job) {
    auto& ev = results[job];
    const std::string label = std::to_string(job / cfg.repeats) + "_" + ev.report.method + "_r" +
                              std::to_string(ev.report.repeat);
    out.reports.push_back(std::move(ev.report));
    add_features(label, ev.features);
  }
  return out;
}

ScenarioResult run_scenario(const ExperimentConfig& cfg) { return run_methods(prepare_scenario(cfg)); }

std::vector<SweepCell> sweep_hyperparameters(const ScenarioContext& ctx, const UnlearnConfig& method,
                                             const std::vector<double>& lr_grid,
                                             const std::vector<std::size_t>& epoch_grid) {
  std::vector<SweepCell> cells;
  for (double lr : lr_grid)
    for (std::size_t e : epoch_grid) cells.push_back({lr, e, 0.0, "ok"});
  parallel_for(cells.size(), resolve_thread_count(ctx.cfg.thread_count), [&](std::size_t i) {
    UnlearnConfig c = method;
    c.base.lr = cells[i].lr;
    c.base.epochs = cells[i].epochs;
    try {
      const auto res = run_unlearning(ctx.original.params, ctx.split, c);
      cells[i].hlr = evaluate_model(ctx, res.params, c.base.seed).report.hlr;
    } catch (const std::exception& e) {
      cells[i].status = std::string("failed: ") + e.what();
    }
  });
  return cells;
}

std::string sweep_grid_csv(const std::vector<SweepCell>& cells) {
  std::ostringstream os;
  os << "lr,epochs,hlr,status\n";
  for (const auto& c : cells) {
    std::string status = c.status;
    std::replace(status.begin(), status.end(), ',', ';');
    os << fixed6(c.lr) << ',' << c.epochs << ',' << fixed6(c.hlr) << ',' << status << '\n';
  }
  return os.str();
}

std::vector<NoisePoint> sweep_dp_noise(const ScenarioContext& ctx, const UnlearnConfig& method,
                                       const std::vector<double>& sigma_grid) {
  std::vector<NoisePoint> points(sigma_grid.size());
  const auto names = agr_datasets(
      [&] {
        ReprScores names_only;
        for (const auto& p : ctx.probes) names_only.datasets.push_back({p.name});
        return names_only;
      }(),
      ctx.cfg.scenario.kind, ctx.cfg.scenario.related_dataset);
  parallel_for(points.size(), resolve_thread_count(ctx.cfg.thread_count), [&](std::size_t i) {
    auto& pt = points[i];
    pt.sigma = sigma_grid[i];
    UnlearnConfig c = method;
    c.base.grad_noise_sigma = sigma_grid[i];
    std::vector<double> chance;
    for (const auto& p : ctx.probes)
      if (std::find(names.begin(), names.end(), p.name) != names.end())
        chance.push_back(1.0 / static_cast<double>(p.data.num_classes));
    pt.chance = mean_of(chance);
    try {
      const auto res = run_unlearning(ctx.original.params, ctx.split, c);
      const auto rep = evaluate_model(ctx, res.params, c.base.seed).report;
      std::vector<double> knn, ur, uo;
      for (const auto& n : names) {
        const auto* d = rep.repr.find(n);
        knn.push_back(d->knn_acc_u);
        ur.push_back(d->cka_ur);
        uo.push_back(d->cka_uo);
      }
      pt.knn_acc = mean_of(knn);
      pt.cka_ur = mean_of(ur);
      pt.cka_uo = mean_of(uo);
    } catch (const std::exception& e) {
      pt.status = std::string("failed: ") + e.what();
    }
  });
  return points;
}

std::string dp_noise_csv(const std::vector<NoisePoint>& points) {
  std::ostringstream os;
  os << "sigma,knn_acc,cka_ur,cka_uo,chance,status\n";
  for (const auto& p : points) {
    std::string status = p.status;
    std::replace(status.begin(), status.end(), ',', ';');
    os << fixed6(p.sigma) << ',' << fixed6(p.knn_acc) << ',' << fixed6(p.cka_ur) << ','
       << fixed6(p.cka_uo) << ',' << fixed6(p.chance) << ',' << status << '\n';
  }
  return os.str();
}

std::string reports_to_csv(const std::vector<MetricsReport>& reports) {
  std::vector<std::string> names;
  for (const auto& r : reports) {
    if (r.repr.datasets.empty()) continue;
    for (const auto& d : r.repr.datasets) names.push_back(d.name);
    break;
  }
  std::ostringstream os;
  os << "method,role,scenario,seed,repeat,status,FA,RA,TFA,TRA,AGL";
  for (const auto& n : names) os << ",kNN_" << n;
  for (const auto& n : names) os << ",CKA_" << n;
  os << ",AGR,H-LR,MIA,RTE_seconds,RTE_sample_visits\n";
  for (const auto& r : reports) {
    const bool ok = r.status == "ok";
    auto num = [&](double v) { return ok ? fixed6(v) : std::string(); };
    const auto& a = r.gaps.unlearned;
    os << r.method << ',' << r.role << ',' << r.scenario << ',' << r.seed << ',' << r.repeat << ','
       << r.status << ',' << num(a.fa) << ',' << num(a.ra) << ',' << num(a.tfa) << ',' << num(a.tra)
       << ',' << num(r.agl);
    for (const auto& n : names) {
      const auto* d = r.repr.find(n);
      os << ',' << (d ? num(d->knn_acc_u) : std::string());
    }
    for (const auto& n : names) {
      const auto* d = r.repr.find(n);
      os << ',' << (d ? num(d->cka_ur) : std::string());
    }
    os << ',' << num(r.agr) << ',' << num(r.hlr) << ',' << num(r.mia_efficacy) << ','
       << fixed6(r.rte_seconds) << ',' << r.rte_sample_visits << '\n';
  }
  return os.str();
}

std::string reports_to_json(const std::vector<MetricsReport>& reports) {
  Json j;
  j["version"] = kConfigVersion;
  Json rows = Json::array();
  for (const auto& r : reports) rows.push_back(to_json(r));
  j["reports"] = rows;
  return j.dump(2) + "\n";
}

std::vector<MetricsReport> reports_from_json(const std::string& text) {
  const Json j = parse_json_text(text, "report");
  if (!j.is_object() || !j.contains("reports") || !j["reports"].is_array())
    throw ConfigError("report JSON needs a 'reports' array");
  std::vector<MetricsReport> out;
  for (const auto& r : j["reports"]) out.push_back(metrics_report_from(r));
  return out;
}

void emit_report(const std::vector<MetricsReport>& reports, const std::filesystem::path& output_dir,
                 const std::vector<FeatureExport>& features) {
  std::error_code ec;
  std::filesystem::create_directories(output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + output_dir.string() + ": " + ec.message());
  write_text_file(output_dir / "report.json", reports_to_json(reports));
  write_text_file(output_dir / "report.csv", reports_to_csv(reports));

  Json timing = Json::array();
  std::ostringstream scatter;
  scatter << "method,role,repeat,dataset,cka_uo,cka_ur\n";
  for (const auto& r : reports) {
    timing.push_back(Json{{"method", r.method}, {"role", r.role}, {"repeat", r.repeat},
                          {"rte_seconds", r.rte_seconds}, {"rte_sample_visits", r.rte_sample_visits}});
    for (const auto& d : r.repr.datasets)
      scatter << r.method << ',' << r.role << ',' << r.repeat << ',' << d.name << ','
              << fixed6(d.cka_uo) << ',' << fixed6(d.cka_ur) << '\n';
  }
  write_text_file(output_dir / "timing.json", timing.dump(2) + "\n");
  write_text_file(output_dir / "cka_scatter.csv", scatter.str());

  if (!features.empty()) {
    const auto dir = output_dir / "features";
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (const auto& f : features) write_ubm1(dir / (f.name + ".ubm1"), f.features);
  }
}

}  // namespace unlbench
