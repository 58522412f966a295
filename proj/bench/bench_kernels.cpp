// Serial reference kernels against their OpenMP versions, plus one
// minibatch gradient of the toy-scale model at 1 and max threads.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mga/kernels.hpp"
#include "mga/model.hpp"
#include "mga/training.hpp"
#include "../tests/support.hpp"

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

template <auto Kernel>
void bm_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Kernel(a.data(), b.data(), c.data(), n, n, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <auto Kernel>
void bm_softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = random_vector(n * n, 3);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    Kernel(in.data(), out.data(), n, n);
    benchmark::DoNotOptimize(out.data());
  }
}

BENCHMARK(bm_gemm<mga::kernels::serial::gemm>)->Name("gemm/serial")->Arg(32)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_gemm<mga::kernels::gemm>)->Name("gemm/omp")->Arg(32)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_gemm<mga::kernels::serial::gemm_a_bt>)->Name("gemm_a_bt/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_gemm<mga::kernels::gemm_a_bt>)->Name("gemm_a_bt/omp")->Arg(64)->Arg(256);
BENCHMARK(bm_gemm<mga::kernels::serial::gemm_at_b>)->Name("gemm_at_b/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_gemm<mga::kernels::gemm_at_b>)->Name("gemm_at_b/omp")->Arg(64)->Arg(256);
BENCHMARK(bm_softmax<mga::kernels::serial::softmax_rows>)->Name("softmax/serial")->Arg(64)->Arg(512);
BENCHMARK(bm_softmax<mga::kernels::softmax_rows>)->Name("softmax/omp")->Arg(64)->Arg(512);

void bm_batch_gradient(benchmark::State& state) {
  mga::ModelConfig config;
  const auto s = mga::test::single_sample(mga::test::fixture("girl_dog.json"), config);
  const mga::Model model(s.config);
  const mga::Dataset data(16, s.example);
  std::vector<std::size_t> indices(data.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  const int threads = state.range(0) == 0 ? mga::kernels::max_threads() : 1;
  for (auto _ : state) benchmark::DoNotOptimize(mga::batch_gradient(model, data, indices, threads));
  state.counters["threads"] = threads;
}
BENCHMARK(bm_batch_gradient)->Name("batch16_gradient/serial")->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_batch_gradient)->Name("batch16_gradient/omp")->Arg(0)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
