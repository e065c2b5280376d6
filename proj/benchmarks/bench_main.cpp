#include <benchmark/benchmark.h>

#include "nails/admm.hpp"
#include "nails/data.hpp"
#include "nails/rng.hpp"
#include "nails/sensitivity.hpp"
#include "nails/solver.hpp"

namespace {

using namespace nails;

struct Instance {
  Dataset data;
  FitState state;
  TrainingProblem problem;
};

Instance make_instance(Index n_x, Index steps) {
  Instance inst;
  SyntheticBinarySystem system;
  system.seed = 7;
  Trace trace = generate_binary_benchmark(system, steps);
  inst.data.traces.push_back(std::move(trace));
  RnnModel model = make_rnn(n_x, 1, 1, {5}, {5}, Activation::tanh(),
                            Activation::sigmoid(), false);
  init_weights(model, 0.15, 11);
  inst.state = make_initial_state(std::move(model), inst.data);
  inst.problem.loss = OutputLoss::cross_entropy();
  inst.problem.reg = SmoothRegularizer::l2(0.1, 0.01);
  return inst;
}

void bench_simulate(benchmark::State& bench) {
  Instance inst = make_instance(3, 1000);
  for (auto _ : bench) {
    benchmark::DoNotOptimize(simulate(inst.state.model, inst.state.x0[0],
                                      inst.data.traces[0].inputs));
  }
}
BENCHMARK(bench_simulate);

void bench_propagate(benchmark::State& bench) {
  Instance inst = make_instance(3, 1000);
  inst.problem.data = &inst.data;
  evaluate_state(inst.state, inst.problem);
  for (auto _ : bench) {
    benchmark::DoNotOptimize(
        propagate_sensitivities(inst.state.model, inst.state.x0, inst.data,
                                inst.state.traj, inst.problem.loss));
  }
}
BENCHMARK(bench_propagate);

void bench_backend(benchmark::State& bench, LsBackend backend) {
  Instance inst = make_instance(3, 500);
  inst.problem.data = &inst.data;
  evaluate_state(inst.state, inst.problem);
  const SensitivityBundle bundle =
      propagate_sensitivities(inst.state.model, inst.state.x0, inst.data,
                              inst.state.traj, inst.problem.loss);
  for (auto _ : bench) {
    const auto ls = build_ls_system(bundle, inst.state.model, inst.state.x0,
                                    inst.problem.reg, {}, backend);
    benchmark::DoNotOptimize(ls->solve(0.0));
  }
}
void bench_stacked(benchmark::State& b) { bench_backend(b, LsBackend::Stacked); }
void bench_normal(benchmark::State& b) { bench_backend(b, LsBackend::Normal); }
void bench_rls(benchmark::State& b) { bench_backend(b, LsBackend::Rls); }
BENCHMARK(bench_stacked);
BENCHMARK(bench_normal);
BENCHMARK(bench_rls);

void bench_prox_l1(benchmark::State& bench) {
  Rng rng(3);
  Vector v(4096);
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  for (auto _ : bench) benchmark::DoNotOptimize(prox_l1(v, 0.3));
}
BENCHMARK(bench_prox_l1);

}  // namespace

BENCHMARK_MAIN();
