#include <benchmark/benchmark.h>

#include <vector>

#include "bvforge/config.hpp"
#include "bvforge/device.hpp"
#include "bvforge/field_solver.hpp"
#include "bvforge/inverse.hpp"
#include "bvforge/surrogate.hpp"
#include "bvforge/sweep.hpp"

using namespace bvforge;

namespace {

const PipelineConfig& desk() {
  static const PipelineConfig cfg = profile_defaults("desk");
  return cfg;
}

const DesignVector kDesign{1.5, 2.0, 0.4, 4, 0.05};

void BM_BuildStructure(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(build_structure(kDesign, desk().geometry));
}
BENCHMARK(BM_BuildStructure)->Unit(benchmark::kMicrosecond);

void BM_PoissonWarmStep(benchmark::State& state) {
  const Structure s = build_structure(kDesign, desk().geometry);
  PoissonSolver solver(s, desk().material, desk().solver);
  const FieldSolution base = solver.solve(100.0, nullptr);
  for (auto _ : state) benchmark::DoNotOptimize(solver.solve(110.0, &base));
}
BENCHMARK(BM_PoissonWarmStep)->Unit(benchmark::kMillisecond);

void BM_Ramp(benchmark::State& state) {
  const auto mode = state.range(0) == 0 ? BreakdownMode::Fast : BreakdownMode::Full;
  const Structure s = build_structure(kDesign, desk().geometry);
  for (auto _ : state) benchmark::DoNotOptimize(ramp_breakdown(s, desk().material, mode, desk().ramp, desk().solver));
  state.SetLabel(to_string(mode));
}
BENCHMARK(BM_Ramp)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_Ramp1D(benchmark::State& state) {
  const Structure s = extrude_1d(build_ideal_1d(desk().geometry));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ramp_breakdown(s, desk().material, BreakdownMode::Full, desk().ramp, desk().solver));
  }
}
BENCHMARK(BM_Ramp1D)->Unit(benchmark::kMillisecond);

Dataset toy_data(std::size_t n) {
  const auto designs = sample_designs(desk().sweep.bounds, n, 3);
  std::vector<Features> x;
  std::vector<double> y;
  for (const auto& d : designs) {
    x.push_back(to_array(d));
    y.push_back(300.0 + 100.0 * d.s_um + 40.0 * d.n_rings);
  }
  return make_dataset(x, y);
}

void BM_PredictBatch(benchmark::State& state) {
  const Dataset d = toy_data(static_cast<std::size_t>(state.range(0)));
  const MlpModel m = init_model(d.stats, desk().training, 1);
  for (auto _ : state) benchmark::DoNotOptimize(predict_batch(m, d.x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PredictBatch)->Arg(75)->Arg(3000);

void BM_TrainEpochs(benchmark::State& state) {
  const Dataset d = toy_data(1000);
  TrainConfig c = desk().training;
  c.max_epochs = 20;
  for (auto _ : state) benchmark::DoNotOptimize(train(d, c));
}
BENCHMARK(BM_TrainEpochs)->Unit(benchmark::kMillisecond);

void BM_InverseDesign(benchmark::State& state) {
  const Dataset d = toy_data(200);
  const MlpModel m = init_model(d.stats, desk().training, 1);
  for (auto _ : state) benchmark::DoNotOptimize(inverse_design(m, 600.0, desk().de, desk().sweep.bounds));
}
BENCHMARK(BM_InverseDesign)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
