#include <vector>

#include <benchmark/benchmark.h>

#include "xdsv/kernels.hpp"
#include "xdsv/random.hpp"

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t tag) {
  xdsv::Rng rng = xdsv::derive_rng(1, tag);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(xdsv::standard_normal(rng));
  return v;
}

// Shapes of a stage-1 3x3 convolution as a GEMM: [out_c, patch] x [patch, positions].
template <bool Parallel>
void BM_GemmNN(benchmark::State& state) {
  const int m = int(state.range(0)), k = int(state.range(0)) * 9, n = 80 * 198;
  const auto a = random_vec(std::size_t(m) * k, 1), b = random_vec(std::size_t(k) * n, 2);
  std::vector<float> c(std::size_t(m) * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      xdsv::kernels::parallel::gemm_nn(m, n, k, a.data(), b.data(), c.data());
    } else {
      xdsv::kernels::serial::gemm_nn(m, n, k, a.data(), b.data(), c.data());
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(m) * n * k);
}

template <bool Parallel>
void BM_Im2col(benchmark::State& state) {
  xdsv::kernels::ConvGeometry g;
  g.in_c = int(state.range(0));
  g.in_h = 80;
  g.in_w = 198;
  g.out_c = g.in_c;
  const auto x = random_vec(std::size_t(g.in_c) * g.in_h * g.in_w, 3);
  std::vector<float> col(std::size_t(g.patch()) * g.positions());
  for (auto _ : state) {
    if constexpr (Parallel) {
      xdsv::kernels::parallel::im2col(x.data(), g, col.data());
    } else {
      xdsv::kernels::serial::im2col(x.data(), g, col.data());
    }
    benchmark::DoNotOptimize(col.data());
  }
}

BENCHMARK(BM_GemmNN<false>)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GemmNN<true>)->Arg(8)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Im2col<false>)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Im2col<true>)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
