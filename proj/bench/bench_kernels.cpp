#include <benchmark/benchmark.h>

#include <random>

#include "nqce/kernels.hpp"
#include "nqce/simulation.hpp"

using namespace nqce;

namespace {

kernels::ScoreBlocks make_blocks(int n) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> size(3, 6);
  std::normal_distribution<double> z;
  kernels::ScoreBlocks b;
  for (int i = 0; i < n; ++i) {
    const int m = size(rng);
    for (int j = 0; j < m; ++j) {
      b.y.push_back(5.0 + 2.0 * z(rng));
      b.coef.push_back(std::abs(z(rng)));
    }
    b.offsets.push_back(b.y.size());
    b.eta.push_back(0.1 * z(rng));
  }
  return b;
}

Matrix make_z(int n, int g) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  Matrix out(n, g);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < g; ++k) out(i, k) = z(rng);
  return out;
}

template <bool Omp>
void BM_scores(benchmark::State& state) {
  const auto blocks = make_blocks(static_cast<int>(state.range(0)));
  std::vector<double> out(blocks.n());
  const SmoothingKernel k;
  for (auto _ : state) {
    if constexpr (Omp)
      kernels::cluster_scores_omp(blocks, 5.0, 0.5, 0.3, k, out);
    else
      kernels::cluster_scores_serial(blocks, 5.0, 0.5, 0.3, k, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Omp>
void BM_slopes(benchmark::State& state) {
  const auto blocks = make_blocks(static_cast<int>(state.range(0)));
  std::vector<double> out(blocks.n());
  const SmoothingKernel k;
  for (auto _ : state) {
    if constexpr (Omp)
      kernels::cluster_slopes_omp(blocks, 5.0, 0.3, k, out);
    else
      kernels::cluster_slopes_serial(blocks, 5.0, 0.3, k, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Omp>
void BM_sups(benchmark::State& state) {
  const auto z = make_z(static_cast<int>(state.range(0)), 9);
  for (auto _ : state) {
    auto s = Omp ? kernels::multiplier_sups_omp(z, 200, 1, kernels::Multiplier::Rademacher)
                 : kernels::multiplier_sups_serial(z, 200, 1, kernels::Multiplier::Rademacher);
    benchmark::DoNotOptimize(s.data());
  }
}

template <bool Omp>
void BM_truth(benchmark::State& state) {
  DgpSpec spec;
  const auto policy = PolicySpec::cps(2.0);
  for (auto _ : state) {
    auto s = Omp ? truth_samples_omp(spec, policy, state.range(0), 7)
                 : truth_samples_serial(spec, policy, state.range(0), 7);
    benchmark::DoNotOptimize(s.star.data());
  }
}

}  // namespace

BENCHMARK(BM_scores<false>)->Arg(100000);
BENCHMARK(BM_scores<true>)->Arg(100000);
BENCHMARK(BM_slopes<false>)->Arg(100000);
BENCHMARK(BM_slopes<true>)->Arg(100000);
BENCHMARK(BM_sups<false>)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sups<true>)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_truth<false>)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_truth<true>)->Arg(100000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
