#include "batchorder/gradient.hpp"

#include <algorithm>
#include <cmath>

#include "batchorder/errors.hpp"

namespace batchorder {

double grad_norm(std::span<const double> g, NormOrder p) {
  if (!all_finite(g)) throw NumericError("gradient contains NaN or Inf");
  double acc = 0.0;
  switch (p) {
    case NormOrder::l1:
      for (double v : g) acc += std::abs(v);
      return acc;
    case NormOrder::l2:
      for (double v : g) acc += v * v;
      return std::sqrt(acc);
    case NormOrder::linf:
      for (double v : g) acc = std::max(acc, std::abs(v));
      return acc;
  }
  return acc;
}

double distance(std::span<const double> a, std::span<const double> b, NormOrder p) {
  if (a.size() != b.size()) throw DimensionError("distance between vectors of different length");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    switch (p) {
      case NormOrder::l1: acc += std::abs(d); break;
      case NormOrder::l2: acc += d * d; break;
      case NormOrder::linf: acc = std::max(acc, std::abs(d)); break;
    }
  }
  if (!std::isfinite(acc)) throw NumericError("distance is not finite");
  return p == NormOrder::l2 ? std::sqrt(acc) : acc;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot product of vectors of different length");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

GradientVector finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw DomainError("finite difference step must be positive");
  GradientVector g;
  g.layout_id = "finite_diff";
  g.values.resize(x.size());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    probe.data()[i] = orig + h;
    const double up = f(probe);
    probe.data()[i] = orig - h;
    const double down = f(probe);
    probe.data()[i] = orig;
    g.values[i] = (up - down) / (2.0 * h);
  }
  return g;
}

NormOrder parse_norm_order(const std::string& text) {
  if (text == "1" || text == "l1") return NormOrder::l1;
  if (text == "2" || text == "l2") return NormOrder::l2;
  if (text == "inf" || text == "linf") return NormOrder::linf;
  throw DomainError("unsupported norm order '" + text + "' (expected 1, 2 or inf)");
}

}  // namespace batchorder
