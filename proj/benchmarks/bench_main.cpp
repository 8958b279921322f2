#include <benchmark/benchmark.h>

#include <vector>

#include "repdecay/dominating.hpp"
#include "repdecay/mean_field.hpp"
#include "repdecay/simulation.hpp"
#include "repdecay/spectral.hpp"

using namespace repdecay;

namespace {

SystemParams store(std::uint32_t n, std::uint32_t d) {
  SystemParams p;
  p.n_servers = n;
  p.d_max = d;
  p.initial_load = FixedTotal{5ull * n};
  p.horizon = 2.0;
  return p;
}

TrajectoryOptions lean() {
  TrajectoryOptions o;
  o.output_intervals = 20;
  o.keep_server_counts = false;
  o.track_shared_pairs = false;
  return o;
}

}  // namespace

static void BM_PolicyTrajectory(benchmark::State& state) {
  SystemParams p = store(static_cast<std::uint32_t>(state.range(0)), 3);
  std::uint64_t events = 0;
  for (auto _ : state) {
    const TrajectoryStats s = run_trajectory(p, lean());
    events += s.failures + s.duplications;
    ++p.seed;
  }
  state.counters["events/s"] = benchmark::Counter(static_cast<double>(events), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_PolicyTrajectory)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_DominatingTrajectory(benchmark::State& state) {
  SystemParams p = store(static_cast<std::uint32_t>(state.range(0)), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_dominating(p, lean()));
    ++p.seed;
  }
}
BENCHMARK(BM_DominatingTrajectory)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_CoupledRun(benchmark::State& state) {
  SystemParams p = store(300, 3);
  CoupledOptions o;
  o.output_intervals = 20;
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_coupled(p, o));
    ++p.seed;
  }
}
BENCHMARK(BM_CoupledRun)->Unit(benchmark::kMillisecond);

static void BM_ForwardEquation(benchmark::State& state) {
  FpOptions o;
  o.times = output_grid(5.0, 50);
  const FpGrid start = FpGrid::poisson_pairs(static_cast<double>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fp_solve(start, o));
}
BENCHMARK(BM_ForwardEquation)->Arg(2)->Arg(10)->Unit(benchmark::kMillisecond);

static void BM_SturmSpectrum(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(spectrum(d, 1.5));
}
BENCHMARK(BM_SturmSpectrum)->RangeMultiplier(4)->Range(2, 128);

static void BM_LimitParticles(benchmark::State& state) {
  TBarOptions o;
  o.d = 3;
  o.V0 = {0.0, 0.0, 6.0};
  o.particles = static_cast<std::size_t>(state.range(0));
  o.horizon = 3.0;
  for (auto _ : state) benchmark::DoNotOptimize(simulate_tbar(o));
}
BENCHMARK(BM_LimitParticles)->Arg(10000)->Unit(benchmark::kMillisecond);

static void BM_FixedPoint(benchmark::State& state) {
  PicardOptions o;
  o.particles = static_cast<std::size_t>(state.range(0));
  o.cells = 200;
  o.tol = 0.01;
  const DiscreteMeasure start = FpGrid::poisson_pairs(2.0).to_measure();
  for (auto _ : state) benchmark::DoNotOptimize(picard_iterate(start, o));
}
BENCHMARK(BM_FixedPoint)->Arg(5000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
