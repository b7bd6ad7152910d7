#pragma once

#include <functional>
#include <memory>

#include "batchorder/batch_plan.hpp"
#include "batchorder/model.hpp"
#include "batchorder/optimizer.hpp"

namespace batchorder {

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;  ///< fraction correct; 0 for regression
};

/// Seen by step observers just before the optimizer moves the parameters.
struct StepEvent {
  int epoch = 0;
  std::size_t step = 0;  ///< global step index, 0-based
  const Model& model;    ///< parameters θ_k, before the update
  const Batch& batch;
  const LossAndGradient& result;
};

using StepObserver = std::function<void(const StepEvent&)>;

/// Owns a model and its optimizer and trains on whatever a BatchSource hands it.
class Trainer {
 public:
  Trainer(std::unique_ptr<Model> model, OptimizerConfig optimizer);

  Model& model() noexcept { return *model_; }
  const Model& model() const noexcept { return *model_; }
  const Optimizer& optimizer() const noexcept { return optimizer_; }

  /// One optimizer step on one batch; returns the batch mean loss before the step.
  double train_batch(const Batch& batch, int epoch = 0);

  /// Drains the source for `epoch`; returns the mean of the batch losses.
  double train_epoch(BatchSource& source, int epoch);

  Evaluation evaluate(const Dataset& data) const;

  void set_observer(StepObserver observer) { observer_ = std::move(observer); }
  std::size_t steps() const noexcept { return steps_; }

 private:
  std::unique_ptr<Model> model_;
  Optimizer optimizer_;
  StepObserver observer_;
  std::size_t steps_ = 0;
};

/// Loss and accuracy of `model` on a dataset, evaluated in fixed-size chunks.
Evaluation evaluate_model(const Model& model, const Dataset& data);

}  // namespace batchorder
