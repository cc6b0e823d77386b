// Serial reference kernels against their OpenMP counterparts.
//
//   ./bench_kernels --benchmark_filter=loo
//
// Thread count follows OMP_NUM_THREADS.

#include "sandreg/kernels.hpp"
#include "sandreg/sandwich.hpp"
#include "sandreg/sim.hpp"

#include <benchmark/benchmark.h>

#include <map>

namespace {

using namespace sandreg;

struct Fixture {
  ClusterDataset data;
  CovarianceStructure s;
  DispersionParams gamma;
  VectorXd beta;
  QmlSolution solution;
};

const Fixture& fixture(std::size_t clusters) {
  static std::map<std::size_t, Fixture> cache;
  auto it = cache.find(clusters);
  if (it != cache.end()) return it->second;
  Rng rng(2024, clusters);
  Fixture f;
  f.data = gen_longitudinal_intro(clusters, rng);
  f.s = CovarianceStructure::ar1(ScaleMode::unit);
  f.gamma = DispersionParams{VectorXd::Constant(1, 0.6), 1.0};
  f.solution = fit_beta(f.data, GlmFamily::gaussian(), f.s, f.gamma);
  f.beta = f.solution.beta;
  return cache.emplace(clusters, std::move(f)).first->second;
}

void bm_cluster_terms(benchmark::State& state, Exec exec) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(
        kernels::cluster_terms(exec, f.data, GlmFamily::gaussian(), f.s, f.gamma, f.beta));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_loo_terms(benchmark::State& state, Exec exec) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::loo_terms(exec, f.solution.terms, f.solution.dtwd_inv));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_sandwich_loss(benchmark::State& state, Exec exec) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  const VectorXd c = VectorXd::Ones(1);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        sandwich_loss(f.data, GlmFamily::gaussian(), f.s, f.gamma, c, std::nullopt, {}, exec));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK_CAPTURE(bm_cluster_terms, serial, Exec::serial)->Arg(100)->Arg(400);
BENCHMARK_CAPTURE(bm_cluster_terms, omp, Exec::parallel)->Arg(100)->Arg(400);
BENCHMARK_CAPTURE(bm_loo_terms, serial, Exec::serial)->Arg(100)->Arg(400);
BENCHMARK_CAPTURE(bm_loo_terms, omp, Exec::parallel)->Arg(100)->Arg(400);
BENCHMARK_CAPTURE(bm_sandwich_loss, serial, Exec::serial)->Arg(100)->Arg(400);
BENCHMARK_CAPTURE(bm_sandwich_loss, omp, Exec::parallel)->Arg(100)->Arg(400);

BENCHMARK_MAIN();
