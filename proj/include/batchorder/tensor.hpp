#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace batchorder {

/// Dense row-major array of doubles.
///
/// The plain constructors only check that the element count matches the
/// shape. Data arriving from outside the program (files, configs) goes
/// through Tensor::checked, which also rejects NaN and Inf.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor checked(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  /// Number of elements per leading-axis slice (product of shape[1:]).
  std::size_t row_size() const noexcept;
  std::span<const double> row(std::size_t i) const;
  std::span<double> row(std::size_t i);

  double& operator()(std::size_t i, std::size_t j);
  double operator()(std::size_t i, std::size_t j) const;

  /// Same data, new shape with equal element count.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape) noexcept;

/// Matrix product of two rank-2 tensors with a fixed per-row summation order.
Tensor matmul(const Tensor& a, const Tensor& b);

bool all_finite(std::span<const double> values) noexcept;

}  // namespace batchorder
