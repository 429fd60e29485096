// Serial reference vs OpenMP gemm at the shapes the networks use: a
// 100-row minibatch through 784-1200-600 layers and the 16-row synthetic
// batch through a 100-unit layer.

#include <benchmark/benchmark.h>

#include <vector>

#include "vatlab/kernels.hpp"
#include "vatlab/numerics.hpp"

namespace {

using vatlab::kernels::GemmDims;
using Gemm = void (*)(std::span<const double>, std::span<const double>, std::span<double>, GemmDims);

void run(benchmark::State& state, Gemm gemm) {
  const GemmDims d{static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)),
                   static_cast<std::size_t>(state.range(2))};
  vatlab::Rng rng(1);
  std::vector<double> a(d.m * d.k), b(d.k * d.n), c(d.m * d.n);
  for (double& v : a) v = rng.normal();
  for (double& v : b) v = rng.normal();
  for (auto _ : state) {
    gemm(a, b, c, d);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.counters["FLOP/s"] = benchmark::Counter(2.0 * d.m * d.k * d.n, benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({100, 784, 1200})->Args({100, 1200, 600})->Args({100, 600, 10})->Args({16, 100, 100});
}

void BM_serial_nn(benchmark::State& s) { run(s, vatlab::kernels::serial::gemm_nn); }
void BM_omp_nn(benchmark::State& s) { run(s, vatlab::kernels::omp::gemm_nn); }
void BM_serial_nt(benchmark::State& s) { run(s, vatlab::kernels::serial::gemm_nt); }
void BM_omp_nt(benchmark::State& s) { run(s, vatlab::kernels::omp::gemm_nt); }

BENCHMARK(BM_serial_nn)->Apply(shapes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_omp_nn)->Apply(shapes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_serial_nt)->Apply(shapes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_omp_nt)->Apply(shapes)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
