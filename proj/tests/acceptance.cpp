// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "unlbench/harness.hpp"

using namespace unlbench;
namespace fs = std::filesystem;

#ifndef UNLBENCH_CLI_PATH
#error "UNLBENCH_CLI_PATH must point at the unlbench executable"
#endif
#ifndef UNLBENCH_DEFAULT_CONFIG
#error "UNLBENCH_DEFAULT_CONFIG must point at configs/default.json"
#endif

namespace {

// Tolerances and thresholds.
constexpr double kPublishedTol = 0.005;
constexpr double kArithmeticSeconds = 1.0;
constexpr double kCkaTol = 1e-9;
constexpr double kCkaSeconds = 10.0;
constexpr int kCkaInstances = 100;
constexpr int kKnnInstances = 200;
constexpr std::size_t kKnnMaxRows = 100;
constexpr std::size_t kKnnK = 5;
constexpr double kGradTol = 1e-4;
constexpr int kGradCases = 20;
constexpr double kRetrainMaxFa = 0.01;
constexpr double kCollapseRaPoints = 0.30;
constexpr double kHeadOnlyCka = 0.9;
constexpr double kQualitativeSeconds = 300.0;
constexpr double kDpNearPoints = 0.02;
constexpr double kDpChanceMargin = 0.10;
constexpr double kMiaRetrainMin = 0.9;
constexpr double kMiaContrast = 0.2;
const std::vector<double> kDpSigmas = {0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

LogitGaps gaps(double f, double r, double tf, double tr) {
  LogitGaps g;
  g.g_f = f;
  g.g_r = r;
  g.g_tf = tf;
  g.g_tr = tr;
  return g;
}

ReprScores repr3(const double gk[3], const double cka[3]) {
  ReprScores r;
  const char* names[3] = {"oh-like", "cub-like", "dn-like"};
  for (int i = 0; i < 3; ++i) r.datasets.push_back({names[i], 0, 0, gk[i], cka[i], 0});
  return r;
}

Outcome published_arithmetic() {
  const auto t0 = std::chrono::steady_clock::now();
  const double agl_pl = compute_agl(gaps(0.010, 0.035, 0.010, 0.009));
  const double agl_duck = compute_agl(gaps(0.009, 0.014, 0.009, 0.011));
  const double duck_g[3] = {0.025, 0.021, 0.007}, duck_c[3] = {0.907, 0.832, 0.849};
  const double pl_g[3] = {0.030, 0.064, 0.020}, pl_c[3] = {0.916, 0.847, 0.845};
  const double agr_duck = compute_agr(repr3(duck_g, duck_c), ScenarioKind::Random, std::nullopt);
  const double agr_pl = compute_agr(repr3(pl_g, pl_c), ScenarioKind::Random, std::nullopt);
  // H-LR is scored on the published two-decimal AGL and AGR, as the tables do.
  const double hlr_duck = compute_hlr(0.96, 0.85);
  const double hlr_pl = compute_hlr(0.94, 0.84);
  const double chained_pl = compute_hlr(agl_pl, agr_pl);
  const double secs = seconds_since(t0);
  auto near = [](double v, double want) { return std::abs(v - want) <= kPublishedTol; };
  const bool ok = near(agl_pl, 0.94) && near(agl_duck, 0.96) && near(agr_duck, 0.85) && near(agr_pl, 0.84) &&
                  near(hlr_duck, 0.90) && near(hlr_pl, 0.89) && secs < kArithmeticSeconds;
  return {ok, fmt("AGL PL %.4f DUCK %.4f, AGR DUCK %.4f PL %.4f, H-LR DUCK %.4f PL %.4f (PL from unrounded "
                  "inputs %.4f), %.3fs",
                  agl_pl, agl_duck, agr_duck, agr_pl, hlr_duck, hlr_pl, chained_pl, secs)};
}

Outcome cka_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  SeededRng rng(2024, 0);
  double worst = 0.0;
  for (int t = 0; t < kCkaInstances; ++t) {
    const std::size_t n = 8 + rng.uniform_index(40);
    const Matrix a = oracle::random_matrix(n, 3 + rng.uniform_index(8), rng);
    const Matrix b = oracle::random_matrix(n, 2 + rng.uniform_index(8), rng);
    const double ab = compute_cka(a, b);
    const Matrix q = oracle::random_orthogonal(a.cols(), rng);
    Matrix scaled = b;
    const double s = 0.1 + 10.0 * rng.uniform();
    for (auto& v : scaled.values()) v *= s;
    worst = std::max({worst, std::abs(compute_cka(a, a) - 1.0), std::abs(ab - compute_cka(b, a)),
                      std::abs(compute_cka(matmul(a, q), b) - ab), std::abs(compute_cka(a, scaled) - ab),
                      std::abs(ab - oracle::cka(a, b))});
  }
  const double secs = seconds_since(t0);
  return {worst <= kCkaTol && secs < kCkaSeconds,
          fmt("worst deviation %.2e over %d instances, %.3fs", worst, kCkaInstances, secs)};
}

Outcome knn_equivalence() {
  SeededRng rng(4048, 0);
  int matches = 0;
  for (int t = 0; t < kKnnInstances; ++t) {
    const std::size_t n = 30 + rng.uniform_index(kKnnMaxRows - 29);
    const std::size_t classes = 2 + rng.uniform_index(4);
    Matrix x = oracle::random_matrix(n, 2 + rng.uniform_index(6), rng);
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<Label>(i % classes);
    for (std::size_t i = 0; i + 9 < n; i += 9) {
      const auto src = x.row(i);
      std::copy(src.begin(), src.end(), x.row(i + 1).begin());
    }
    const auto split = stratified_split(y, classes, 77 + t);
    std::vector<Label> ty;
    for (auto r : split.train) ty.push_back(y[r]);
    const Matrix tr = select_rows(x, split.train), te = select_rows(x, split.test);
    if (knn_predict(tr, ty, te, kKnnK, classes) == oracle::knn(tr, ty, te, kKnnK, classes)) ++matches;
  }
  return {matches == kKnnInstances, fmt("%d/%d instances identical", matches, kKnnInstances)};
}

Outcome gradient_check() {
  double worst = 0.0;
  for (int seed = 0; seed < kGradCases; ++seed) {
    SeededRng rng(500 + seed, 3);
    const MlpParams p = MlpParams::glorot(7, 10, 6, 5, rng);
    const Matrix x = oracle::random_matrix(4, 7, rng);
    std::vector<Label> y;
    for (int i = 0; i < 4; ++i) y.push_back(static_cast<Label>(rng.uniform_index(5)));
    worst = std::max(worst, oracle::worst_block_fd_error(p, x, y));
  }
  return {worst < kGradTol, fmt("worst block relative error %.2e over %d cases", worst, kGradCases)};
}

const MetricsReport* find_row(const std::vector<MetricsReport>& rows, const std::string& method) {
  for (const auto& r : rows)
    if (r.method == method) return &r;
  return nullptr;
}

double mean_cka_ur(const MetricsReport& r) {
  double s = 0.0;
  for (const auto& d : r.repr.datasets) s += d.cka_ur;
  return s / static_cast<double>(r.repr.datasets.size());
}

Outcome gold_standard(const std::vector<MetricsReport>& rows) {
  const MetricsReport* r = find_row(rows, "RETRAIN");
  if (!r) return {false, "no RETRAIN row"};
  const auto& g = r->gaps;
  const bool zero_gaps = g.g_f == 0.0 && g.g_r == 0.0 && g.g_tf == 0.0 && g.g_tr == 0.0;
  const bool ok = r->gaps.unlearned.fa <= kRetrainMaxFa && r->agl == 1.0 && r->agr == 1.0 && r->hlr == 1.0 &&
                  zero_gaps;
  return {ok, fmt("FA %.4f RA %.4f, AGL %.17g AGR %.17g H-LR %.17g", g.unlearned.fa, g.unlearned.ra, r->agl,
                  r->agr, r->hlr)};
}

Outcome qualitative(const ScenarioContext& ctx, const std::vector<MetricsReport>& rows, double run_seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  const MetricsReport *ft = find_row(rows, "FT"), *ga = find_row(rows, "GA"), *rl = find_row(rows, "RL");
  if (!ft || !ga || !rl) return {false, "missing FT, GA or RL row"};
  bool collapse = true;
  std::string detail = fmt("(i) FT cka %.3f RA %.3f", mean_cka_ur(*ft), ft->gaps.unlearned.ra);
  for (const auto* r : {ga, rl}) {
    const bool c = r->status == "ok" && mean_cka_ur(*r) < mean_cka_ur(*ft) &&
                   r->gaps.unlearned.ra <= ft->gaps.unlearned.ra - kCollapseRaPoints;
    collapse = collapse && c;
    detail += fmt("; %s cka %.3f RA %.3f", r->method.c_str(), mean_cka_ur(*r), r->gaps.unlearned.ra);
  }

  bool below_diagonal = true;
  std::size_t checked = 0;
  for (const auto& r : rows) {
    if (r.method != "PL" && r.method != "FT" && r.method != "DUCK") continue;
    below_diagonal = below_diagonal && r.status == "ok";
    for (const auto& d : r.repr.datasets) {
      below_diagonal = below_diagonal && d.cka_uo > d.cka_ur;
      ++checked;
    }
  }
  below_diagonal = below_diagonal && checked > 0;
  detail += fmt(". (ii) %zu PL/FT/DUCK points uo>ur: %s", checked, below_diagonal ? "yes" : "no");

  std::size_t pl_index = 0;
  while (pl_index < ctx.cfg.methods.size() && ctx.cfg.methods[pl_index].method != Method::PL) ++pl_index;
  if (pl_index == ctx.cfg.methods.size()) return {false, "no PL method configured"};
  UnlearnConfig pl = ctx.cfg.methods[pl_index];
  pl.base.seed = repeat_seed(ctx.cfg.master_seed, pl_index, 0);
  const auto ll = last_layer_analysis(ctx.original.params, ctx.retrained.params, ctx.split, pl);
  const bool shortcut = ll.cka_full_vs_head > kHeadOnlyCka;
  const double secs = run_seconds + seconds_since(t0);
  detail += fmt(". (iii) CKA(PL, PL head-only) %.4f. %.2fs", ll.cka_full_vs_head, secs);
  return {collapse && below_diagonal && shortcut && secs < kQualitativeSeconds, detail};
}

double related_cka_or(const ScenarioContext& ctx, const std::string& related) {
  const auto report = evaluate_model(ctx, ctx.original.params, ctx.cfg.master_seed).report;
  const auto* d = report.repr.find(related);
  return d ? d->cka_ur : std::nan("");
}

Outcome top_stress(const ScenarioContext& random_ctx) {
  ExperimentConfig top = random_ctx.cfg;
  top.scenario.kind = ScenarioKind::Top;
  top.scenario.related_dataset = "cub-like";
  const ScenarioContext top_ctx = prepare_scenario(top);
  const double r = related_cka_or(random_ctx, "cub-like");
  const double t = related_cka_or(top_ctx, "cub-like");
  return {t < r, fmt("CKA(o,r) on cub-like: top %.4f, random %.4f", t, r)};
}

Outcome dp_cliff(const ScenarioContext& ctx) {
  std::size_t pl_index = 0;
  while (pl_index < ctx.cfg.methods.size() && ctx.cfg.methods[pl_index].method != Method::PL) ++pl_index;
  if (pl_index == ctx.cfg.methods.size()) return {false, "no PL method configured"};
  UnlearnConfig pl = ctx.cfg.methods[pl_index];
  pl.base.seed = repeat_seed(ctx.cfg.master_seed, pl_index, 0);
  const auto pts = sweep_dp_noise(ctx, pl, kDpSigmas);
  for (const auto& p : pts)
    if (p.status != "ok") return {false, fmt("sigma %g failed: %s", p.sigma, p.status.c_str())};
  const auto& base = pts.front();
  const auto& small = pts[1];
  const auto& large = pts.back();
  const bool ok = std::abs(small.knn_acc - base.knn_acc) <= kDpNearPoints &&
                  large.knn_acc <= large.chance + kDpChanceMargin;
  return {ok, fmt("k-NN acc sigma 0: %.4f, sigma %g: %.4f, sigma %g: %.4f (chance %.4f)", base.knn_acc,
                  small.sigma, small.knn_acc, large.sigma, large.knn_acc, large.chance)};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "unlbench_acceptance";
  fs::remove_all(root);
  std::vector<std::string> reports;
  for (const char* threads : {"1", "8", "1", "8"}) {
    const fs::path out = root / (std::string("t") + threads + "_" + std::to_string(reports.size()));
    setenv("UNLBENCH_THREADS", threads, 1);
    const std::string cmd = std::string("\"") + UNLBENCH_CLI_PATH + "\" run --config \"" + UNLBENCH_DEFAULT_CONFIG +
                            "\" --out \"" + out.string() + "\" > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    unsetenv("UNLBENCH_THREADS");
    if (rc != 0) return {false, fmt("run with UNLBENCH_THREADS=%s exited with %d", threads, rc)};
    reports.push_back(read_text_file(out / "report.json"));
  }
  fs::remove_all(root);
  const bool same = std::all_of(reports.begin(), reports.end(), [&](const auto& r) { return r == reports[0]; });
  return {same, fmt("%zu runs (threads 1, 8, 1, 8), report.json %s", reports.size(),
                    same ? "byte-identical" : "differs")};
}

Outcome mia_direction(const std::vector<MetricsReport>& rows) {
  const MetricsReport *o = find_row(rows, "ORIGINAL"), *r = find_row(rows, "RETRAIN");
  if (!o || !r) return {false, "missing reference rows"};
  const bool ok = r->mia_efficacy >= kMiaRetrainMin && o->mia_efficacy <= r->mia_efficacy - kMiaContrast;
  return {ok, fmt("retrained %.4f, original %.4f", r->mia_efficacy, o->mia_efficacy)};
}

}  // namespace

int main() {
  unsetenv("UNLBENCH_THREADS");
  const ExperimentConfig cfg = load_experiment_config(UNLBENCH_DEFAULT_CONFIG);

  std::vector<std::pair<int, std::function<Outcome()>>> plan;
  const auto t0 = std::chrono::steady_clock::now();
  const ScenarioContext ctx = prepare_scenario(cfg);
  const auto rows = run_methods(ctx).reports;
  const double run_seconds = seconds_since(t0);

  plan.emplace_back(1, published_arithmetic);
  plan.emplace_back(2, cka_properties);
  plan.emplace_back(3, knn_equivalence);
  plan.emplace_back(4, gradient_check);
  plan.emplace_back(5, [&] { return gold_standard(rows); });
  plan.emplace_back(6, [&] { return qualitative(ctx, rows, run_seconds); });
  plan.emplace_back(7, [&] { return top_stress(ctx); });
  plan.emplace_back(8, [&] { return dp_cliff(ctx); });
  plan.emplace_back(9, determinism);
  plan.emplace_back(10, [&] { return mia_direction(rows); });

  int failures = 0;
  for (auto& [id, check] : plan) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("criterion %2d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
