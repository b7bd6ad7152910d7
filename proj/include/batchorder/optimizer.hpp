#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "batchorder/gradient.hpp"

namespace batchorder {

enum class OptimizerKind { sgd, momentum, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& text);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.1;
  double momentum = 0.0;  ///< μ for the momentum rule
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-parameter optimizer state. Gradients are of the loss; every rule
/// subtracts:
///   sgd       θ ← θ − η g
///   momentum  v ← μ v − η g,  θ ← θ + v
///   adam      bias-corrected moments, θ ← θ − η m̂ / (√v̂ + ε)
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::size_t param_count, std::string layout_id);

  /// Applies one update in place. Throws LayoutError if `grad` belongs to a
  /// different layout or size.
  void step(std::span<double> params, const GradientVector& grad);

  const OptimizerConfig& config() const noexcept { return config_; }
  std::uint64_t step_count() const noexcept { return steps_; }
  std::span<const double> velocity() const noexcept { return velocity_; }
  std::span<const double> first_moment() const noexcept { return m_; }
  std::span<const double> second_moment() const noexcept { return v_; }

 private:
  OptimizerConfig config_;
  std::string layout_id_;
  std::vector<double> velocity_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t steps_ = 0;
};

}  // namespace batchorder
