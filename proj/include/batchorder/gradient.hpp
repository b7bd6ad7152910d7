#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "batchorder/tensor.hpp"

namespace batchorder {

/// Flat gradient aligned to one model's parameter ordering.
struct GradientVector {
  std::vector<double> values;
  std::string layout_id;

  std::size_t size() const noexcept { return values.size(); }
};

enum class NormOrder { l1, l2, linf };

/// ‖g‖_p for p ∈ {1, 2, ∞}. Throws NumericError on non-finite entries.
double grad_norm(std::span<const double> g, NormOrder p);
inline double grad_norm(const GradientVector& g, NormOrder p) { return grad_norm(g.values, p); }

/// ‖a − b‖_p. Sizes must match.
double distance(std::span<const double> a, std::span<const double> b, NormOrder p);

double dot(std::span<const double> a, std::span<const double> b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Central differences (f(x + h·e_i) − f(x − h·e_i)) / 2h for every coordinate of x.
GradientVector finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

NormOrder parse_norm_order(const std::string& text);

}  // namespace batchorder
