#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "batchorder/gradient.hpp"
#include "batchorder/rng.hpp"
#include "batchorder/tensor.hpp"

namespace batchorder {

enum class ModelKind { linreg2, logreg, mlp, cnn_small };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

/// Dimensions fixing a model's parameter layout.
struct ModelSpec {
  ModelKind kind = ModelKind::mlp;
  std::size_t input_dim = 2;  ///< flattened feature count
  std::size_t classes = 2;    ///< ignored by linreg2
  std::size_t hidden = 32;    ///< mlp hidden width
  std::size_t image_height = 28;  ///< cnn_small: input is 1×H×W
  std::size_t image_width = 28;
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
};

struct LossResult {
  std::vector<double> per_example;
  double mean = 0.0;
};

struct LossAndGradient {
  LossResult loss;
  GradientVector gradient;
};

/// A differentiable model with a flat parameter vector.
///
/// Classifiers take integer class labels (stored as doubles) and use softmax
/// cross-entropy; linreg2 takes real targets and uses squared error. All
/// reductions over examples run in ascending example order, so results are
/// reproducible bit for bit. Const member functions never mutate shared
/// state and may be called from several threads at once.
class Model {
 public:
  virtual ~Model() = default;

  ModelKind kind() const noexcept { return spec_.kind; }
  const ModelSpec& spec() const noexcept { return spec_; }
  const std::string& layout_id() const noexcept { return layout_id_; }
  bool is_classifier() const noexcept { return spec_.kind != ModelKind::linreg2; }
  std::size_t num_outputs() const noexcept { return is_classifier() ? spec_.classes : 1; }

  std::size_t param_count() const noexcept { return params_.size(); }
  std::span<const double> params() const noexcept { return params_; }
  std::span<double> params() noexcept { return params_; }
  void set_params(std::span<const double> values);

  /// Raw outputs, shape (n, num_outputs): logits or regression values.
  virtual Tensor outputs(const Tensor& inputs) const = 0;

  LossResult forward_loss(const Tensor& inputs, std::span<const double> targets) const;
  GradientVector backward(const Tensor& inputs, std::span<const double> targets) const;
  virtual LossAndGradient loss_and_gradient(const Tensor& inputs, std::span<const double> targets) const = 0;

  /// Class labels (argmax, ties to the lowest index) or regression outputs.
  std::vector<double> predict(const Tensor& inputs) const;

  /// Prediction minus target for regression models.
  std::vector<double> signed_errors(const Tensor& inputs, std::span<const double> targets) const;

  virtual std::unique_ptr<Model> clone() const = 0;

 protected:
  Model(ModelSpec spec, std::string layout_id, std::size_t param_count);

  /// Throws DimensionError if the batch does not fit this model.
  void check_batch(const Tensor& inputs, std::span<const double> targets) const;
  void check_inputs(const Tensor& inputs) const;

  /// Per-example losses from raw outputs.
  LossResult losses_from_outputs(const Tensor& outputs, std::span<const double> targets) const;

  ModelSpec spec_;
  std::string layout_id_;
  std::vector<double> params_;
};

/// Builds a model with fan-in uniform initialization drawn from `rng`.
std::unique_ptr<Model> make_model(const ModelSpec& spec, Rng& rng);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

/// Numerically stable softmax cross-entropy for one row of logits.
double softmax_cross_entropy(std::span<const double> logits, std::size_t label);

}  // namespace batchorder
