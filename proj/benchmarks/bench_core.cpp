#include <benchmark/benchmark.h>

#include "floodda/assimilation.hpp"
#include "floodda/experiment.hpp"

using namespace floodda;

namespace {

const hydro::HydroModel& model() {
  static const auto m = experiment::build_model(experiment::ExperimentConfig{});
  return m;
}

void BM_HydroStep(benchmark::State& state) {
  const auto& m = model();
  const auto friction = experiment::default_truth().friction;
  auto s = m.initial_state(static_cast<double>(state.range(0)), friction, 0.0, 3600.0);
  for (auto _ : state) {
    auto r = m.step(s, 60.0, static_cast<double>(state.range(0)), friction);
    benchmark::DoNotOptimize(r.state.depth.data());
  }
}
BENCHMARK(BM_HydroStep)->Arg(400)->Arg(5100);

// One 6 h background window of a single member.
void BM_HydroWindow(benchmark::State& state) {
  const auto& m = model();
  const auto truth = experiment::default_truth();
  const auto q = forcing::Hydrograph::constant(2500.0, 0.0, 7 * 3600.0);
  const auto s = m.initial_state(2500.0, truth.friction, 0.0, 3600.0);
  for (auto _ : state) benchmark::DoNotOptimize(m.run(s, truth, q, 0.0, 6 * 3600.0).states.size());
}
BENCHMARK(BM_HydroWindow)->Unit(benchmark::kMillisecond);

// EnKF analysis with 75 members and a window-sized observation vector.
void BM_AnalysisUpdate(benchmark::State& state) {
  const std::size_t n_obs = static_cast<std::size_t>(state.range(0));
  const auto bg = assim::draw_ensemble(assim::default_prior(), 75, 3);
  obs::ObsVector y;
  for (std::size_t i = 0; i < n_obs; ++i)
    y.entries.push_back({obs::Kind::WL, static_cast<int>(i % 3), 3600.0 * static_cast<double>(i / 3),
                         10.0, 0.05});
  y.sort();
  std::vector<obs::ObsVector> eq(bg.size(), y);
  for (std::size_t i = 0; i < bg.size(); ++i)
    for (auto& e : eq[i].entries) e.value = 10.0 + 0.1 * bg[i].mu + 0.01 * bg[i].friction.ks[1];
  for (auto _ : state)
    benchmark::DoNotOptimize(assim::analysis_update(bg, eq, y, false, 5).controls.size());
}
BENCHMARK(BM_AnalysisUpdate)->Arg(54)->Arg(200);

}  // namespace
BENCHMARK_MAIN();
