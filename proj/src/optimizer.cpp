#include "batchorder/optimizer.hpp"

#include <cmath>

#include "batchorder/errors.hpp"

namespace batchorder {

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::momentum: return "momentum";
    case OptimizerKind::adam: return "adam";
  }
  return "?";
}

OptimizerKind parse_optimizer_kind(const std::string& text) {
  if (text == "sgd") return OptimizerKind::sgd;
  if (text == "momentum") return OptimizerKind::momentum;
  if (text == "adam") return OptimizerKind::adam;
  throw DomainError("unknown optimizer '" + text + "'");
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t param_count, std::string layout_id)
    : config_(config), layout_id_(std::move(layout_id)) {
  if (config_.kind == OptimizerKind::momentum) velocity_.assign(param_count, 0.0);
  if (config_.kind == OptimizerKind::adam) {
    m_.assign(param_count, 0.0);
    v_.assign(param_count, 0.0);
  }
}

void Optimizer::step(std::span<double> params, const GradientVector& grad) {
  if (grad.layout_id != layout_id_)
    throw LayoutError("gradient layout '" + grad.layout_id + "' does not match optimizer layout '" + layout_id_ + "'");
  if (grad.values.size() != params.size())
    throw LayoutError("gradient has " + std::to_string(grad.values.size()) + " entries for " +
                      std::to_string(params.size()) + " parameters");
  const double lr = config_.learning_rate;
  const auto& g = grad.values;
  ++steps_;
  switch (config_.kind) {
    case OptimizerKind::sgd:
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * g[i];
      break;
    case OptimizerKind::momentum:
      for (std::size_t i = 0; i < params.size(); ++i) {
        velocity_[i] = config_.momentum * velocity_[i] - lr * g[i];
        params[i] += velocity_[i];
      }
      break;
    case OptimizerKind::adam: {
      const double b1 = config_.beta1, b2 = config_.beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0 - b1) * g[i];
        v_[i] = b2 * v_[i] + (1.0 - b2) * g[i] * g[i];
        const double m_hat = m_[i] / c1;
        const double v_hat = v_[i] / c2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      }
      break;
    }
  }
}

}  // namespace batchorder
