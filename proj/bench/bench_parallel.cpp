// Serial reference against the OpenMP kernels. Argument 0 is serial, 1 is parallel.

#include <benchmark/benchmark.h>

#include <random>

#include "icu/estimation.hpp"
#include "icu/fleet.hpp"
#include "icu/generators.hpp"
#include "icu/hospital.hpp"
#include "icu/nmf.hpp"
#include "icu/simulator.hpp"
#include "icu/uncertainty.hpp"

using namespace icu;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) == 0 ? Exec::serial : Exec::parallel; }

Instance ten_score_instance(std::uint64_t seed, bool zero_transfer = false) {
  std::mt19937_64 rng(seed);
  GeneratorOptions o;
  o.n_min = 10;
  o.n_max = 10;
  o.conditions_at_zero_transfer_reward = zero_transfer;
  return generate_instance(rng, o);
}

void BM_SimulatorReplications(benchmark::State& state) {
  const HospitalScenario s = HospitalScenario::defaults(ten_score_instance(1).kernel, 5.0, 0.25, 20);
  SimOptions o;
  o.reps = 16;
  o.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(run_simulation(s, TransferPolicy::threshold(10, 4), o, 7));
}

void BM_NmfMultistart(benchmark::State& state) {
  NmfProblem p;
  p.target = ten_score_instance(2).kernel;
  p.rank = 6;
  p.starts = 32;
  p.iters = 500;
  p.tol = 1e-10;
  for (auto _ : state) benchmark::DoNotOptimize(nmf_factorize(p, 3, exec_of(state)));
}

void BM_RobustValueIteration(benchmark::State& state) {
  std::mt19937_64 rng(4);
  GeneratorOptions g;
  g.n_min = 10;
  g.n_max = 10;
  const RobustInstance ri = generate_robust_instance(rng, g);
  RobustOptions o;
  o.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(robust_value_iteration(ri.model, ri.base.rewards, o));
}

void BM_SynthAndCount(benchmark::State& state) {
  const TransitionKernel k = ten_score_instance(5).kernel;
  const Eigen::VectorXd start = Eigen::VectorXd::Constant(10, 0.1);
  for (auto _ : state) {
    const TrajectorySet t = synth_trajectories(k, start, 200000, 6, exec_of(state));
    benchmark::DoNotOptimize(count_transitions(t, exec_of(state)));
  }
}

void BM_LagrangianCurve(benchmark::State& state) {
  const FleetInstance f{40, 10, ten_score_instance(8, true)};
  for (auto _ : state) benchmark::DoNotOptimize(lagrangian_curve(f, 201, exec_of(state)));
}

void BM_WhittleSweep(benchmark::State& state) {
  const Instance inst = ten_score_instance(9, true);
  const std::vector<double> grid = transfer_reward_grid(inst, 401);
  for (auto _ : state) benchmark::DoNotOptimize(whittle_sweep(inst, grid, exec_of(state)));
}

}  // namespace

BENCHMARK(BM_SimulatorReplications)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NmfMultistart)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RobustValueIteration)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SynthAndCount)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LagrangianCurve)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WhittleSweep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
