// Serial reference vs OpenMP fan-out for the two parallel kernels and a
// whole coordinated day. Arg 0 = serial, 1 = parallel.
#include <benchmark/benchmark.h>

#include "dopf/admm.hpp"
#include "dopf/network_subproblem.hpp"
#include "dopf/prosumer_subproblem.hpp"
#include "dopf/scenario.hpp"

#include <random>

using namespace dopf;

namespace {

Execution mode_of(const benchmark::State& st) { return st.range(0) ? Execution::kParallel : Execution::kSerial; }

ScenarioConfig tree_config(Scenario s, int n) {
  ScenarioConfig cfg;
  cfg.scenario = s;
  cfg.feeder.topology = Topology::kTree;
  cfg.feeder.prosumers = n;
  cfg.profiles.penetration = PvPenetration::kHigh;
  return cfg;
}

void BM_ProsumerBatch(benchmark::State& st) {
  const auto inst = build_instance(tree_config(Scenario::E, static_cast<int>(st.range(1))));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<ProsumerCoupling> cps;
  for (std::size_t h = 0; h < inst.prosumers.size(); ++h) {
    auto c = ProsumerCoupling::none(inst.horizon.T);
    for (int t = 0; t < inst.horizon.T; ++t) {
      c.p_hat[t] = u(rng);
      c.lambda_p[t] = 0.1 * u(rng);
    }
    cps.push_back(c);
  }
  for (auto _ : st) benchmark::DoNotOptimize(solve_all(inst.prosumers, inst.horizon, cps, mode_of(st)));
}

void BM_NetworkSolve(benchmark::State& st) {
  const auto inst = build_instance(tree_config(Scenario::E, static_cast<int>(st.range(1))));
  const NetworkModel model(inst.feeder, register_prosumers(inst.feeder, inst.prosumers), inst.horizon);
  auto snap = CouplingSnapshot::initial(model.num_prosumers(), inst.horizon.T);
  NetworkSolveOptions opt;
  opt.execution = mode_of(st);
  for (auto _ : st)
    benchmark::DoNotOptimize(solve_network(model, snap, FairnessMode::kEgalitarian, {}, {}, opt));
}

void BM_CoordinatedDay(benchmark::State& st) {
  auto cfg = tree_config(Scenario::E, static_cast<int>(st.range(1)));
  cfg.admm.execution = mode_of(st);
  int iters = 0;
  for (auto _ : st) iters = run_scenario(cfg).iterations;
  st.counters["admm_iterations"] = iters;
}

}  // namespace

BENCHMARK(BM_ProsumerBatch)->ArgsProduct({{0, 1}, {15, 50}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NetworkSolve)->ArgsProduct({{0, 1}, {15, 50}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CoordinatedDay)->ArgsProduct({{0, 1}, {15}})->Unit(benchmark::kMillisecond)->Iterations(1);

BENCHMARK_MAIN();
