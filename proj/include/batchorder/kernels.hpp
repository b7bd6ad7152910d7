#pragma once

// Data-parallel inner loops. Every kernel exists twice: a plain serial
// reference in `kernels::serial` and an OpenMP version in `kernels::omp`.
// Both produce bit-identical results: the parallel versions only split work
// across independent outputs and never reorder a reduction.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace batchorder::kernels {

/// C[m×n] = A[m×k] · B[k×n]
using GemmFn = void (*)(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
                        std::span<const double> b, std::span<double> c);

/// Scores `count` independent items. `score(i)` must be safe to call concurrently.
using ScoreFn = std::function<double(std::size_t)>;

namespace serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
/// C[m×n] = A[m×k] · B[n×k]ᵀ
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
/// C[m×n] = A[k×m]ᵀ · B[k×n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);

std::vector<double> score_all(std::size_t count, const ScoreFn& score);

}  // namespace serial

namespace omp {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);

std::vector<double> score_all(std::size_t count, const ScoreFn& score);

}  // namespace omp

/// Index of the smallest score; ties go to the lowest index.
std::size_t stable_argmin(std::span<const double> scores);

}  // namespace batchorder::kernels
