// Serial reference vs parallel kernels at the shapes the models use.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ctd/kernels.hpp"

namespace {

using ctd::kernels::Backend;

std::vector<double> Random(std::size_t n) {
  std::mt19937_64 gen(n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(gen);
  return v;
}

template <bool kParallel>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = Random(m * k), b = Random(k * n);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if constexpr (kParallel)
      ctd::kernels::GemmParallel(m, k, n, a.data(), false, b.data(), false, c.data(), false);
    else
      ctd::kernels::GemmSerial(m, k, n, a.data(), false, b.data(), false, c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * m * k * n));
}

// batch x tokens rows through a width-64 linear layer, the encoder's GRU
// gates, and a square product
void GemmShapes(benchmark::internal::Benchmark* b) {
  b->Args({768, 64, 64})->Args({64, 98, 192})->Args({256, 256, 256});
}

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Apply(GemmShapes);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Apply(GemmShapes);

template <Backend kBackend>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 12;
  const auto x = Random(rows * cols);
  std::vector<double> y(rows * cols);
  ctd::kernels::ScopedBackend backend(kBackend);
  for (auto _ : state) {
    ctd::kernels::SoftmaxRows(rows, cols, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

BENCHMARK(BM_Softmax<Backend::kSerial>)->Name("softmax/serial")->Arg(3072)->Arg(49152);
BENCHMARK(BM_Softmax<Backend::kParallel>)->Name("softmax/parallel")->Arg(3072)->Arg(49152);

}  // namespace

BENCHMARK_MAIN();
