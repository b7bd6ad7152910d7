#include "batchorder/tensor.hpp"

#include <cmath>
#include <string>

#include "batchorder/errors.hpp"
#include "batchorder/kernels.hpp"

namespace batchorder {

std::size_t shape_product(const std::vector<std::size_t>& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

bool all_finite(std::span<const double> values) noexcept {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size())
    throw DimensionError("tensor shape holds " + std::to_string(shape_product(shape_)) + " elements but " +
                         std::to_string(data_.size()) + " were given");
}

Tensor Tensor::checked(std::vector<std::size_t> shape, std::vector<double> data) {
  if (!all_finite(data)) throw NumericError("tensor input contains NaN or Inf");
  return Tensor(std::move(shape), std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range");
  return shape_[axis];
}

std::size_t Tensor::row_size() const noexcept {
  if (shape_.empty() || shape_[0] == 0) return 0;
  return data_.size() / shape_[0];
}

std::span<const double> Tensor::row(std::size_t i) const {
  const std::size_t w = row_size();
  return std::span<const double>(data_).subspan(i * w, w);
}

std::span<double> Tensor::row(std::size_t i) {
  const std::size_t w = row_size();
  return std::span<double>(data_).subspan(i * w, w);
}

double& Tensor::operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
double Tensor::operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const { return Tensor(std::move(shape), data_); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul expects rank-2 tensors");
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul inner dimensions differ: " + std::to_string(a.dim(1)) + " vs " +
                         std::to_string(b.dim(0)));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  kernels::omp::gemm_nn(m, n, k, a.data(), b.data(), c.data());
  return c;
}

}  // namespace batchorder
