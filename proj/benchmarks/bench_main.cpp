#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "mvcn/assignment.hpp"
#include "mvcn/measure.hpp"
#include "mvcn/model.hpp"
#include "mvcn/rng.hpp"
#include "mvcn/simulate.hpp"
#include "mvcn/stats.hpp"

namespace {

mvcn::Matrix random_cost(std::size_t n, std::uint64_t seed) {
  mvcn::Matrix c(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c(i, j) = mvcn::draw_uniform({seed, {static_cast<std::uint32_t>(i), mvcn::StreamKind::Initial,
                                           static_cast<std::uint32_t>(j)}, 0});
  return c;
}

void BM_Assignment(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto cost = random_cost(n, 7);
  for (auto _ : state) benchmark::DoNotOptimize(mvcn::assignment_solve(cost).cost);
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Assignment)->RangeMultiplier(2)->Range(16, 512)->Complexity(benchmark::oNCubed);

void BM_Wasserstein1D(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = std::sin(static_cast<double>(i));
    b[i] = std::cos(static_cast<double>(i) * 1.3);
  }
  const mvcn::EmpiricalMeasure mu(1, a), nu(1, b);
  for (auto _ : state) benchmark::DoNotOptimize(mvcn::wasserstein_p(mu, nu, 4.0));
}
BENCHMARK(BM_Wasserstein1D)->Range(1 << 10, 1 << 16);

void BM_PhiloxNormals(benchmark::State& state) {
  std::vector<double> out(4);
  std::uint64_t counter = 0;
  for (auto _ : state) {
    mvcn::draw_normal({1, {0, mvcn::StreamKind::Idiosyncratic, 3}, counter++}, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * 4);
}
BENCHMARK(BM_PhiloxNormals);

void BM_ReproducibleSum(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (double& x : v) x = normal(rng);
  for (auto _ : state) benchmark::DoNotOptimize(mvcn::reproducible_sum(v));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ReproducibleSum)->Arg(4096);

// Particle-steps per second of the Euler-Maruyama kernel.
void BM_EulerSteps(benchmark::State& state, const mvcn::ModelSpec& model) {
  const auto n = static_cast<std::size_t>(state.range(0));
  mvcn::SimConfig cfg;
  cfg.particles = n;
  cfg.blocks = 4;
  cfg.initial_law = mvcn::InitialLaw::isotropic_gaussian({0.0}, 1.0);
  auto ens = mvcn::initialize_ensemble(model, cfg);
  const mvcn::StepParams params{1e-3, true, 1, mvcn::StepParams::Noise::Philox};
  // Noise is drawn a few steps at a time, so time a run of steps.
  constexpr std::uint64_t kSteps = 16;
  for (auto _ : state) mvcn::advance(ens, model, params, kSteps);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ens.total_particles() * kSteps));
}
BENCHMARK_CAPTURE(BM_EulerSteps, anharmonic1d, mvcn::anharmonic1d())->Arg(1000)->Arg(10000);
BENCHMARK_CAPTURE(BM_EulerSteps, cubic2d, mvcn::cubic2d())->Arg(1000)->Arg(10000);
BENCHMARK_CAPTURE(BM_EulerSteps, ou_meanfield, mvcn::ou_meanfield())->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
