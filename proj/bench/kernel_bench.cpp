// Serial reference against the OpenMP kernels. Run with
// OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include "batchorder/bop.hpp"
#include "batchorder/kernels.hpp"

using namespace batchorder;

namespace {

std::vector<double> random_matrix(std::size_t n, std::uint64_t seed) {
  Rng rng(seed, 0);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <kernels::GemmFn Gemm>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n * n, 1), b = random_matrix(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(n, n, n, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

// Gradient matching: one candidate batch gradient per score call.
template <bool Parallel>
void BM_match(benchmark::State& state) {
  Rng drng(0, stream_id(Stream::data));
  const Dataset data = generate_digits(600, drng);
  Rng init(0, stream_id(Stream::init));
  const auto model = make_model({ModelKind::mlp, 784, 10, 32}, init);
  PoisonObjective obj;
  obj.adversarial = data.gather(std::vector<std::size_t>{0, 1, 2, 3});
  obj.candidate_count = static_cast<std::size_t>(state.range(0));
  const auto target = poison_gradient(*model, obj);
  for (auto _ : state) {
    Rng rng(0, stream_id(Stream::candidates));
    auto r = find_matching_batch(*model, target, data, 22, obj, rng, Parallel);
    benchmark::DoNotOptimize(r.distance);
  }
}

}  // namespace

BENCHMARK(BM_gemm<kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<kernels::omp::gemm_nn>)->Name("gemm_nn/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<kernels::serial::gemm_tn>)->Name("gemm_tn/serial")->Arg(256);
BENCHMARK(BM_gemm<kernels::omp::gemm_tn>)->Name("gemm_tn/omp")->Arg(256);
BENCHMARK(BM_match<false>)->Name("match/serial")->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_match<true>)->Name("match/omp")->Arg(100)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
