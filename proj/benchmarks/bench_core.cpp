#include <benchmark/benchmark.h>

#include "ucts/estimation.hpp"
#include "ucts/kalman.hpp"
#include "ucts/montecarlo.hpp"
#include "ucts/variance_tests.hpp"

using namespace ucts;

namespace {

StateSpaceSystem att_shape_system() {
  ModelSpec spec;
  spec.trend = TrendKind::rw_drift;
  spec.seasonal = SeasonalSpec{12, {1, 2}, SeasonalVarianceMode::common};
  spec.cycle = CycleSpec{96.0, 1.0};
  ParamVector p;
  p.irregular_var = 0.4;
  p.level_var = 0.2;
  p.seasonal_var = {0.05};
  p.cycle_var = 0.1;
  p.drift = 0.03;
  return assemble(spec, p);
}

StateSpaceSystem local_level_system() {
  ModelSpec spec;
  spec.trend = TrendKind::local_level;
  ParamVector p;
  p.irregular_var = 1.0;
  p.level_var = 0.5;
  return assemble(spec, p);
}

}  // namespace

static void FilterLocalLevel(benchmark::State& state) {
  auto sys = local_level_system();
  TimeSeries ts = simulate_ssm(sys, static_cast<int>(state.range(0)), 1u);
  for (auto _ : state) {
    benchmark::DoNotOptimize(filter_loglik(sys, ts));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(FilterLocalLevel)->Arg(156)->Arg(600);

static void FilterAttShape(benchmark::State& state) {
  auto sys = att_shape_system();
  TimeSeries ts = simulate_ssm(sys, static_cast<int>(state.range(0)), 1u);
  for (auto _ : state) {
    benchmark::DoNotOptimize(filter_loglik(sys, ts));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(FilterAttShape)->Arg(156)->Arg(600);

static void SmoothAttShape(benchmark::State& state) {
  auto sys = att_shape_system();
  TimeSeries ts = simulate_ssm(sys, static_cast<int>(state.range(0)), 1u);
  auto filtered = filter(sys, ts);
  for (auto _ : state) {
    benchmark::DoNotOptimize(smooth(sys, filtered));
  }
}
BENCHMARK(SmoothAttShape)->Arg(156);

static void FitRwDriftSeasonal(benchmark::State& state) {
  ModelSpec spec;
  spec.trend = TrendKind::rw_drift;
  spec.seasonal = SeasonalSpec{12, {1, 2}, SeasonalVarianceMode::common};
  ParamVector truth;
  truth.irregular_var = 1.0;
  truth.level_var = 0.5;
  truth.seasonal_var = {0.1};
  truth.drift = 0.05;
  TimeSeries ts = simulate_ssm(assemble(spec, truth), 156, 7u);
  FitOptions options;
  options.restarts = 2;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit(spec, ts, options));
  }
}
BENCHMARK(FitRwDriftSeasonal)->Unit(benchmark::kMillisecond);

static void SeasonalTestBattery(benchmark::State& state) {
  RngStream rng(5, 0);
  TimeSeries ts;
  ts.start = MonthIndex{2000, 1};
  for (int t = 0; t < 150; ++t) ts.values.emplace_back(rng.next_normal());
  for (auto _ : state) {
    benchmark::DoNotOptimize(seasonal_test(ts, SeasonalTarget::all()));
  }
}
BENCHMARK(SeasonalTestBattery);

static void SimulateAttShape(benchmark::State& state) {
  auto sys = att_shape_system();
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_ssm(sys, 156, 3u));
  }
}
BENCHMARK(SimulateAttShape);

BENCHMARK_MAIN();
