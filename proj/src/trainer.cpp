#include "batchorder/trainer.hpp"

#include <algorithm>

#include "batchorder/errors.hpp"

namespace batchorder {

Trainer::Trainer(std::unique_ptr<Model> model, OptimizerConfig optimizer)
    : model_(std::move(model)), optimizer_(optimizer, model_->param_count(), model_->layout_id()) {}

double Trainer::train_batch(const Batch& batch, int epoch) {
  const LossAndGradient result = model_->loss_and_gradient(batch.inputs, batch.targets);
  if (!all_finite(result.gradient.values)) throw NumericError("non-finite gradient during training");
  if (observer_) observer_(StepEvent{epoch, steps_, *model_, batch, result});
  optimizer_.step(model_->params(), result.gradient);
  ++steps_;
  return result.loss.mean;
}

double Trainer::train_epoch(BatchSource& source, int epoch) {
  source.reset(epoch);
  double total = 0.0;
  std::size_t count = 0;
  while (auto batch = source.next_batch()) {
    total += train_batch(*batch, epoch);
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

Evaluation Trainer::evaluate(const Dataset& data) const { return evaluate_model(*model_, data); }

Evaluation evaluate_model(const Model& model, const Dataset& data) {
  constexpr std::size_t chunk = 512;
  const std::size_t n = data.size();
  const std::size_t d = data.feature_dim();
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    std::vector<double> xs(data.inputs.data().begin() + static_cast<std::ptrdiff_t>(start * d),
                           data.inputs.data().begin() + static_cast<std::ptrdiff_t>((start + count) * d));
    const Tensor x({count, d}, std::move(xs));
    const std::span<const double> y(data.targets.data() + start, count);
    const Tensor out = model.outputs(x);
    for (std::size_t i = 0; i < count; ++i) {
      if (model.is_classifier()) {
        const auto label = static_cast<std::size_t>(y[i]);
        loss += softmax_cross_entropy(out.row(i), label);
        if (argmax(out.row(i)) == label) ++correct;
      } else {
        const double r = out.data()[i] - y[i];
        loss += r * r;
      }
    }
  }
  Evaluation e;
  e.loss = loss / static_cast<double>(n);
  e.accuracy = model.is_classifier() ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  return e;
}

}  // namespace batchorder
