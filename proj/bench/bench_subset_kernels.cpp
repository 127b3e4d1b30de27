// Reference (LU, explicit inverses) vs serial vs OpenMP subset kernels.
//
//   bench_subset_kernels --benchmark_filter=Hessian
//
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>

#include "dppmle/dpp_model.hpp"
#include "dppmle/info_geometry.hpp"
#include "dppmle/reference.hpp"
#include "dppmle/subset_kernels.hpp"

using namespace dppmle;

namespace {

Matrix kernel(int n) {
  std::mt19937_64 rng(7);
  return random_kernel(n, rng).entries();
}

void BM_MinorsReference(benchmark::State& state) {
  const Matrix l = kernel(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(reference::principal_minors(l));
}

template <Exec E>
void BM_LogDets(benchmark::State& state) {
  const Matrix l = kernel(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(principal_log_dets(l, E));
}

template <Exec E>
void BM_TracePowers(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Matrix l = kernel(n);
  std::mt19937_64 rng(8);
  const Matrix h = random_direction(n, rng).entries();
  const SubsetInverseCache cache(l, E);
  for (auto _ : state) benchmark::DoNotOptimize(subset_trace_powers(cache, h, 4, E));
}

void BM_HessianReference(benchmark::State& state) {
  const Matrix l = kernel(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(reference::hessian_by_polarization(l));
}

template <Exec E>
void BM_Hessian(benchmark::State& state) {
  const auto star = build_table(KernelMatrix(kernel(static_cast<int>(state.range(0)))));
  for (auto _ : state) benchmark::DoNotOptimize(hessian_matrix(star, E));
}

}  // namespace

BENCHMARK(BM_MinorsReference)->DenseRange(8, 14, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LogDets<Exec::serial>)->Name("BM_LogDets/serial")->DenseRange(8, 14, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LogDets<Exec::parallel>)->Name("BM_LogDets/parallel")->DenseRange(8, 14, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TracePowers<Exec::serial>)->Name("BM_TracePowers/serial")->DenseRange(8, 14, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TracePowers<Exec::parallel>)->Name("BM_TracePowers/parallel")->DenseRange(8, 14, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HessianReference)->DenseRange(4, 6, 1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Hessian<Exec::serial>)->Name("BM_Hessian/serial")->DenseRange(4, 10, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Hessian<Exec::parallel>)->Name("BM_Hessian/parallel")->DenseRange(4, 10, 2)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
