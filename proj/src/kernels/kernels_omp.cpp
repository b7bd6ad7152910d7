#include "batchorder/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdint>

namespace batchorder::kernels::omp {

namespace {
// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 15;
}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] = acc;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double api = a[p * m + i];
      if (api == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

std::vector<double> score_all(std::size_t count, const ScoreFn& score) {
  std::vector<double> out(count);
  const auto total = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(dynamic, 1) if (count > 1)
  for (std::int64_t i = 0; i < total; ++i) out[static_cast<std::size_t>(i)] = score(static_cast<std::size_t>(i));
  return out;
}

}  // namespace batchorder::kernels::omp
