#include <benchmark/benchmark.h>

#include "mesokappa/observables.hpp"
#include "mesokappa/simulator.hpp"
#include "mesokappa/variational.hpp"

using namespace mesokappa;

namespace {

Execution mode(const benchmark::State& state) {
  return state.range(0) ? Execution::Parallel : Execution::Serial;
}

const ExchangeSampler& gg3_sampler() {
  static const ExchangeSampler s(make_kernel("gg3"));
  return s;
}

void BM_KappaS(benchmark::State& state) {
  const auto k = make_kernel("gg2");
  for (auto _ : state) benchmark::DoNotOptimize(kappa_s(k, static_spec(), mode(state)));
}

void BM_Assemble(benchmark::State& state) {
  const TrialSpace space(2, 3, 3);
  AssembleOptions opt;
  opt.kappa_s_ref = 1.0;
  opt.exec = mode(state);
  for (auto _ : state) benchmark::DoNotOptimize(assemble(gg3_sampler(), space, 200000, opt));
}

void BM_Replicas(benchmark::State& state) {
  SimConfig cfg;
  cfg.N = 64;
  cfg.replicas = 16;
  cfg.t_max = 40.0;
  GreenKuboOptions opt;
  opt.exec = mode(state);
  opt.kappa_s_unit = 1.0;
  opt.kappa_f_unit = 1.0;
  opt.keep_trajectory = false;
  for (auto _ : state) benchmark::DoNotOptimize(run_green_kubo(cfg, gg3_sampler(), opt));
}

}  // namespace

// Argument 0 is the serial reference, 1 the OpenMP path.
BENCHMARK(BM_KappaS)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Assemble)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Replicas)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
