#include <benchmark/benchmark.h>

#include "unlbench/harness.hpp"

using namespace unlbench;

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  SeededRng rng(seed, 0);
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = rng.normal();
  return m;
}

void BM_Cka(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = gaussian(n, 16, 1), b = gaussian(n, 16, 2);
  for (auto _ : state) benchmark::DoNotOptimize(compute_cka(a, b));
}
BENCHMARK(BM_Cka)->Arg(64)->Arg(256)->Arg(1024);

void BM_KnnAccuracy(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix x = gaussian(n, 16, 3);
  std::vector<Label> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<Label>(i % 10);
  for (auto _ : state) benchmark::DoNotOptimize(compute_knn_accuracy(x, y, 10, 5, 7));
}
BENCHMARK(BM_KnnAccuracy)->Arg(500)->Arg(2000);

void BM_ForwardBackward(benchmark::State& state) {
  SeededRng rng(4, 0);
  const MlpParams p = MlpParams::glorot(32, kDefaultHidden, kDefaultFeatureDim, 20, rng);
  const Matrix x = gaussian(static_cast<std::size_t>(state.range(0)), 32, 5);
  std::vector<Label> y(x.rows());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<Label>(i % 20);
  for (auto _ : state) benchmark::DoNotOptimize(grad_cross_entropy(p, x, y, false));
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(256);

void BM_UnlearnPl(benchmark::State& state) {
  ExperimentConfig cfg = ExperimentConfig::desk_default();
  cfg.methods.clear();
  static const ScenarioContext ctx = prepare_scenario(cfg);
  UnlearnConfig pl = default_unlearn_config(Method::PL);
  for (auto _ : state) benchmark::DoNotOptimize(run_unlearning(ctx.original.params, ctx.split, pl).steps);
}
BENCHMARK(BM_UnlearnPl)->Unit(benchmark::kMillisecond);

}  // namespace
