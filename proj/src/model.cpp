#include "batchorder/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "batchorder/errors.hpp"
#include "batchorder/kernels.hpp"

namespace batchorder {

namespace {

void fill_uniform(std::span<double> out, double bound, Rng& rng) {
  for (double& v : out) v = rng.uniform(-bound, bound);
}

std::size_t label_of(double target, std::size_t classes) {
  if (!(target >= 0.0) || target != std::floor(target) || target >= static_cast<double>(classes))
    throw DimensionError("class label " + std::to_string(target) + " outside [0, " + std::to_string(classes) + ")");
  return static_cast<std::size_t>(target);
}

void add_bias_rows(std::span<double> z, std::size_t rows, std::span<const double> bias) {
  const std::size_t width = bias.size();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < width; ++j) z[i * width + j] += bias[j];
}

void column_sums(std::span<const double> m, std::size_t rows, std::size_t cols, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j] += m[i * cols + j];
}

/// dZ = (softmax(Z) − onehot(y)) / n, written in place over `logits`.
void softmax_grad_in_place(std::span<double> logits, std::size_t n, std::size_t k, std::span<const double> targets) {
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = logits.subspan(i * k, k);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v = v / sum * scale;
    row[label_of(targets[i], k)] -= scale;
  }
}

// ---------------------------------------------------------------------------

class LinReg2 final : public Model {
 public:
  explicit LinReg2(const ModelSpec& spec) : Model(spec, "linreg2", 2) {}

  // params = (slope θ1, intercept θ0)
  Tensor outputs(const Tensor& inputs) const override {
    check_inputs(inputs);
    const std::size_t n = inputs.dim(0);
    Tensor out({n, 1});
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = params_[0] * inputs.data()[i] + params_[1];
    return out;
  }

  LossAndGradient loss_and_gradient(const Tensor& inputs, std::span<const double> targets) const override {
    check_batch(inputs, targets);
    const std::size_t n = inputs.dim(0);
    LossAndGradient r;
    r.loss.per_example.resize(n);
    double g1 = 0.0, g0 = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = inputs.data()[i];
      const double res = params_[0] * x + params_[1] - targets[i];
      r.loss.per_example[i] = res * res;
      total += res * res;
      g1 += 2.0 * res * x;
      g0 += 2.0 * res;
    }
    const double dn = static_cast<double>(n);
    r.loss.mean = total / dn;
    r.gradient = {{g1 / dn, g0 / dn}, layout_id_};
    return r;
  }

  std::unique_ptr<Model> clone() const override { return std::make_unique<LinReg2>(*this); }
};

// ---------------------------------------------------------------------------

class LogReg final : public Model {
 public:
  explicit LogReg(const ModelSpec& spec)
      : Model(spec, "logreg:" + std::to_string(spec.input_dim) + "-" + std::to_string(spec.classes),
              spec.classes * spec.input_dim + spec.classes) {}

  void init(Rng& rng) {
    fill_uniform(weights(), 1.0 / std::sqrt(static_cast<double>(spec_.input_dim)), rng);
  }

  Tensor outputs(const Tensor& inputs) const override {
    check_inputs(inputs);
    const std::size_t n = inputs.dim(0), d = spec_.input_dim, k = spec_.classes;
    Tensor z({n, k});
    kernels::omp::gemm_nt(n, k, d, inputs.data(), weights(), z.data());
    add_bias_rows(z.data(), n, bias());
    return z;
  }

  LossAndGradient loss_and_gradient(const Tensor& inputs, std::span<const double> targets) const override {
    check_batch(inputs, targets);
    const std::size_t n = inputs.dim(0), d = spec_.input_dim, k = spec_.classes;
    Tensor z = outputs(inputs);
    LossAndGradient r;
    r.loss = losses_from_outputs(z, targets);
    softmax_grad_in_place(z.data(), n, k, targets);
    r.gradient = {std::vector<double>(params_.size()), layout_id_};
    std::span<double> g(r.gradient.values);
    kernels::omp::gemm_tn(k, d, n, z.data(), inputs.data(), g.first(k * d));
    column_sums(z.data(), n, k, g.subspan(k * d, k));
    return r;
  }

  std::unique_ptr<Model> clone() const override { return std::make_unique<LogReg>(*this); }

 private:
  std::span<const double> weights() const { return std::span<const double>(params_).first(spec_.classes * spec_.input_dim); }
  std::span<double> weights() { return std::span<double>(params_).first(spec_.classes * spec_.input_dim); }
  std::span<const double> bias() const {
    return std::span<const double>(params_).subspan(spec_.classes * spec_.input_dim, spec_.classes);
  }
};

// ---------------------------------------------------------------------------

class Mlp final : public Model {
 public:
  explicit Mlp(const ModelSpec& spec)
      : Model(spec,
              "mlp:" + std::to_string(spec.input_dim) + "-" + std::to_string(spec.hidden) + "-" +
                  std::to_string(spec.classes),
              spec.hidden * spec.input_dim + spec.hidden + spec.classes * spec.hidden + spec.classes) {}

  void init(Rng& rng) {
    std::span<double> p(params_);
    fill_uniform(p.subspan(w1_off(), spec_.hidden * spec_.input_dim), 1.0 / std::sqrt(double(spec_.input_dim)), rng);
    fill_uniform(p.subspan(w2_off(), spec_.classes * spec_.hidden), 1.0 / std::sqrt(double(spec_.hidden)), rng);
  }

  Tensor outputs(const Tensor& inputs) const override {
    check_inputs(inputs);
    std::vector<double> hidden;
    return forward(inputs, hidden);
  }

  LossAndGradient loss_and_gradient(const Tensor& inputs, std::span<const double> targets) const override {
    check_batch(inputs, targets);
    const std::size_t n = inputs.dim(0), d = spec_.input_dim, h = spec_.hidden, k = spec_.classes;
    std::vector<double> act;  // post-ReLU hidden activations (n×h)
    Tensor z = forward(inputs, act);
    LossAndGradient r;
    r.loss = losses_from_outputs(z, targets);
    softmax_grad_in_place(z.data(), n, k, targets);

    r.gradient = {std::vector<double>(params_.size()), layout_id_};
    std::span<double> g(r.gradient.values);
    std::span<const double> p(params_);
    kernels::omp::gemm_tn(k, h, n, z.data(), act, g.subspan(w2_off(), k * h));
    column_sums(z.data(), n, k, g.subspan(b2_off(), k));

    std::vector<double> dact(n * h);
    kernels::omp::gemm_nn(n, h, k, z.data(), p.subspan(w2_off(), k * h), dact);
    for (std::size_t i = 0; i < n * h; ++i)
      if (act[i] <= 0.0) dact[i] = 0.0;
    kernels::omp::gemm_tn(h, d, n, dact, inputs.data(), g.subspan(w1_off(), h * d));
    column_sums(dact, n, h, g.subspan(b1_off(), h));
    return r;
  }

  std::unique_ptr<Model> clone() const override { return std::make_unique<Mlp>(*this); }

 private:
  std::size_t w1_off() const { return 0; }
  std::size_t b1_off() const { return spec_.hidden * spec_.input_dim; }
  std::size_t w2_off() const { return b1_off() + spec_.hidden; }
  std::size_t b2_off() const { return w2_off() + spec_.classes * spec_.hidden; }

  Tensor forward(const Tensor& inputs, std::vector<double>& act) const {
    const std::size_t n = inputs.dim(0), d = spec_.input_dim, h = spec_.hidden, k = spec_.classes;
    std::span<const double> p(params_);
    act.assign(n * h, 0.0);
    kernels::omp::gemm_nt(n, h, d, inputs.data(), p.subspan(w1_off(), h * d), act);
    add_bias_rows(act, n, p.subspan(b1_off(), h));
    for (double& v : act) v = v > 0.0 ? v : 0.0;
    Tensor z({n, k});
    kernels::omp::gemm_nt(n, k, h, act, p.subspan(w2_off(), k * h), z.data());
    add_bias_rows(z.data(), n, p.subspan(b2_off(), k));
    return z;
  }
};

// ---------------------------------------------------------------------------

/// Two 3×3 stride-2 convolutions with zero padding 1 and ReLU, then a dense head.
class CnnSmall final : public Model {
 public:
  explicit CnnSmall(const ModelSpec& spec) : Model(spec, layout_name(spec), count_params(spec)) {
    if (spec.image_height * spec.image_width != spec.input_dim)
      throw DimensionError("cnn_small input_dim must equal image_height * image_width");
  }

  void init(Rng& rng) {
    std::span<double> p(params_);
    const std::size_t c1 = spec_.conv1_channels, c2 = spec_.conv2_channels;
    fill_uniform(p.subspan(k1_off(), c1 * 9), 1.0 / 3.0, rng);
    fill_uniform(p.subspan(k2_off(), c2 * c1 * 9), 1.0 / std::sqrt(double(c1 * 9)), rng);
    fill_uniform(p.subspan(w_off(), spec_.classes * flat()), 1.0 / std::sqrt(double(flat())), rng);
  }

  Tensor outputs(const Tensor& inputs) const override {
    check_inputs(inputs);
    const std::size_t n = inputs.dim(0);
    std::vector<double> a1(n * size1()), a2(n * flat());
    for (std::size_t i = 0; i < n; ++i) features(inputs.row(i), span_of(a1, i, size1()), span_of(a2, i, flat()));
    return head(a2, n);
  }

  LossAndGradient loss_and_gradient(const Tensor& inputs, std::span<const double> targets) const override {
    check_batch(inputs, targets);
    const std::size_t n = inputs.dim(0), k = spec_.classes, f = flat();
    std::vector<double> a1(n * size1()), a2(n * f);
    for (std::size_t i = 0; i < n; ++i) features(inputs.row(i), span_of(a1, i, size1()), span_of(a2, i, f));
    Tensor z = head(a2, n);
    LossAndGradient r;
    r.loss = losses_from_outputs(z, targets);
    softmax_grad_in_place(z.data(), n, k, targets);

    r.gradient = {std::vector<double>(params_.size()), layout_id_};
    std::span<double> g(r.gradient.values);
    std::span<const double> p(params_);
    kernels::omp::gemm_tn(k, f, n, z.data(), a2, g.subspan(w_off(), k * f));
    column_sums(z.data(), n, k, g.subspan(b_off(), k));

    std::vector<double> da2(n * f);
    kernels::omp::gemm_nn(n, f, k, z.data(), p.subspan(w_off(), k * f), da2);
    std::vector<double> da1(size1());
    for (std::size_t i = 0; i < n; ++i)
      backward_features(inputs.row(i), span_of(a1, i, size1()), span_of(a2, i, f), span_of(da2, i, f), da1, g);
    return r;
  }

  std::unique_ptr<Model> clone() const override { return std::make_unique<CnnSmall>(*this); }

 private:
  static std::size_t out_dim(std::size_t in) { return (in - 1) / 2 + 1; }
  static std::string layout_name(const ModelSpec& s) {
    return "cnn_small:1x" + std::to_string(s.image_height) + "x" + std::to_string(s.image_width) + "-" +
           std::to_string(s.conv1_channels) + "-" + std::to_string(s.conv2_channels) + "-" +
           std::to_string(s.classes);
  }
  static std::size_t count_params(const ModelSpec& s) {
    const std::size_t h2 = out_dim(out_dim(s.image_height)), w2 = out_dim(out_dim(s.image_width));
    return s.conv1_channels * 9 + s.conv1_channels + s.conv2_channels * s.conv1_channels * 9 + s.conv2_channels +
           s.classes * s.conv2_channels * h2 * w2 + s.classes;
  }

  static std::span<double> span_of(std::vector<double>& v, std::size_t i, std::size_t width) {
    return std::span<double>(v).subspan(i * width, width);
  }

  std::size_t h1() const { return out_dim(spec_.image_height); }
  std::size_t w1() const { return out_dim(spec_.image_width); }
  std::size_t h2() const { return out_dim(h1()); }
  std::size_t w2() const { return out_dim(w1()); }
  std::size_t size1() const { return spec_.conv1_channels * h1() * w1(); }
  std::size_t flat() const { return spec_.conv2_channels * h2() * w2(); }

  std::size_t k1_off() const { return 0; }
  std::size_t c1_off() const { return spec_.conv1_channels * 9; }
  std::size_t k2_off() const { return c1_off() + spec_.conv1_channels; }
  std::size_t c2_off() const { return k2_off() + spec_.conv2_channels * spec_.conv1_channels * 9; }
  std::size_t w_off() const { return c2_off() + spec_.conv2_channels; }
  std::size_t b_off() const { return w_off() + spec_.classes * flat(); }

  /// Strided 3×3 convolution, padding 1, followed by ReLU.
  static void conv_relu(std::span<const double> in, std::size_t cin, std::size_t hin, std::size_t win,
                        std::span<const double> kernel, std::span<const double> bias, std::size_t cout,
                        std::size_t hout, std::size_t wout, std::span<double> out) {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t oy = 0; oy < hout; ++oy) {
        for (std::size_t ox = 0; ox < wout; ++ox) {
          double acc = bias[co];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* kern = kernel.data() + (co * cin + ci) * 9;
            const double* plane = in.data() + ci * hin * win;
            for (std::size_t ky = 0; ky < 3; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(2 * oy + ky) - 1;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(hin)) continue;
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(2 * ox + kx) - 1;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(win)) continue;
                acc += kern[ky * 3 + kx] * plane[iy * static_cast<std::ptrdiff_t>(win) + ix];
              }
            }
          }
          out[(co * hout + oy) * wout + ox] = acc > 0.0 ? acc : 0.0;
        }
      }
    }
  }

  /// Given dL/d(post-ReLU output), accumulates kernel/bias gradients and,
  /// when `din` is non-empty, adds dL/d(input) into it.
  static void conv_backward(std::span<const double> in, std::size_t cin, std::size_t hin, std::size_t win,
                            std::span<const double> kernel, std::span<const double> out, std::span<const double> dout,
                            std::size_t cout, std::size_t hout, std::size_t wout, std::span<double> gkernel,
                            std::span<double> gbias, std::span<double> din) {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t oy = 0; oy < hout; ++oy) {
        for (std::size_t ox = 0; ox < wout; ++ox) {
          const std::size_t o = (co * hout + oy) * wout + ox;
          if (out[o] <= 0.0) continue;
          const double d = dout[o];
          if (d == 0.0) continue;
          gbias[co] += d;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const std::size_t kbase = (co * cin + ci) * 9;
            const std::size_t pbase = ci * hin * win;
            for (std::size_t ky = 0; ky < 3; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(2 * oy + ky) - 1;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(hin)) continue;
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(2 * ox + kx) - 1;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(win)) continue;
                const std::size_t pix = pbase + static_cast<std::size_t>(iy) * win + static_cast<std::size_t>(ix);
                gkernel[kbase + ky * 3 + kx] += d * in[pix];
                if (!din.empty()) din[pix] += d * kernel[kbase + ky * 3 + kx];
              }
            }
          }
        }
      }
    }
  }

  void features(std::span<const double> image, std::span<double> a1, std::span<double> a2) const {
    std::span<const double> p(params_);
    const std::size_t c1 = spec_.conv1_channels, c2 = spec_.conv2_channels;
    conv_relu(image, 1, spec_.image_height, spec_.image_width, p.subspan(k1_off(), c1 * 9), p.subspan(c1_off(), c1), c1,
              h1(), w1(), a1);
    conv_relu(a1, c1, h1(), w1(), p.subspan(k2_off(), c2 * c1 * 9), p.subspan(c2_off(), c2), c2, h2(), w2(), a2);
  }

  void backward_features(std::span<const double> image, std::span<const double> a1, std::span<const double> a2,
                         std::span<const double> da2, std::vector<double>& da1, std::span<double> g) const {
    std::span<const double> p(params_);
    const std::size_t c1 = spec_.conv1_channels, c2 = spec_.conv2_channels;
    std::fill(da1.begin(), da1.end(), 0.0);
    conv_backward(a1, c1, h1(), w1(), p.subspan(k2_off(), c2 * c1 * 9), a2, da2, c2, h2(), w2(),
                  g.subspan(k2_off(), c2 * c1 * 9), g.subspan(c2_off(), c2), da1);
    conv_backward(image, 1, spec_.image_height, spec_.image_width, p.subspan(k1_off(), c1 * 9), a1, da1, c1, h1(),
                  w1(), g.subspan(k1_off(), c1 * 9), g.subspan(c1_off(), c1), {});
  }

  Tensor head(std::span<const double> a2, std::size_t n) const {
    const std::size_t k = spec_.classes, f = flat();
    std::span<const double> p(params_);
    Tensor z({n, k});
    kernels::omp::gemm_nt(n, k, f, a2, p.subspan(w_off(), k * f), z.data());
    add_bias_rows(z.data(), n, p.subspan(b_off(), k));
    return z;
  }
};

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::linreg2: return "linreg2";
    case ModelKind::logreg: return "logreg";
    case ModelKind::mlp: return "mlp";
    case ModelKind::cnn_small: return "cnn_small";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "linreg2") return ModelKind::linreg2;
  if (text == "logreg") return ModelKind::logreg;
  if (text == "mlp") return ModelKind::mlp;
  if (text == "cnn_small") return ModelKind::cnn_small;
  throw DomainError("unknown model kind '" + text + "'");
}

Model::Model(ModelSpec spec, std::string layout_id, std::size_t param_count)
    : spec_(spec), layout_id_(std::move(layout_id)), params_(param_count, 0.0) {}

void Model::set_params(std::span<const double> values) {
  if (values.size() != params_.size())
    throw LayoutError("expected " + std::to_string(params_.size()) + " parameters, got " +
                      std::to_string(values.size()));
  std::copy(values.begin(), values.end(), params_.begin());
}

void Model::check_inputs(const Tensor& inputs) const {
  if (inputs.rank() < 1) throw DimensionError("model inputs need a leading batch axis");
  if (inputs.dim(0) > 0 && inputs.row_size() != spec_.input_dim)
    throw DimensionError(to_string(spec_.kind) + " expects " + std::to_string(spec_.input_dim) +
                         " features per example, got " + std::to_string(inputs.row_size()));
}

void Model::check_batch(const Tensor& inputs, std::span<const double> targets) const {
  check_inputs(inputs);
  if (inputs.dim(0) != targets.size())
    throw DimensionError("batch has " + std::to_string(inputs.dim(0)) + " inputs but " +
                         std::to_string(targets.size()) + " targets");
  if (targets.empty()) throw DimensionError("empty batch");
}

LossResult Model::losses_from_outputs(const Tensor& outputs, std::span<const double> targets) const {
  const std::size_t n = outputs.dim(0);
  LossResult r;
  r.per_example.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double loss;
    if (is_classifier()) {
      loss = softmax_cross_entropy(outputs.row(i), label_of(targets[i], spec_.classes));
    } else {
      const double res = outputs.data()[i] - targets[i];
      loss = res * res;
    }
    r.per_example[i] = loss;
    total += loss;
  }
  r.mean = total / static_cast<double>(n);
  return r;
}

LossResult Model::forward_loss(const Tensor& inputs, std::span<const double> targets) const {
  check_batch(inputs, targets);
  return losses_from_outputs(outputs(inputs), targets);
}

GradientVector Model::backward(const Tensor& inputs, std::span<const double> targets) const {
  return loss_and_gradient(inputs, targets).gradient;
}

std::vector<double> Model::predict(const Tensor& inputs) const {
  const Tensor out = outputs(inputs);
  const std::size_t n = out.dim(0);
  std::vector<double> pred(n);
  for (std::size_t i = 0; i < n; ++i)
    pred[i] = is_classifier() ? static_cast<double>(argmax(out.row(i))) : out.data()[i];
  return pred;
}

std::vector<double> Model::signed_errors(const Tensor& inputs, std::span<const double> targets) const {
  if (is_classifier()) throw DomainError("signed errors are defined for regression models only");
  check_batch(inputs, targets);
  const Tensor out = outputs(inputs);
  std::vector<double> err(targets.size());
  for (std::size_t i = 0; i < err.size(); ++i) err[i] = out.data()[i] - targets[i];
  return err;
}

std::unique_ptr<Model> make_model(const ModelSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case ModelKind::linreg2: {
      if (spec.input_dim != 1) throw DimensionError("linreg2 takes exactly one feature");
      return std::make_unique<LinReg2>(spec);
    }
    case ModelKind::logreg: {
      auto m = std::make_unique<LogReg>(spec);
      m->init(rng);
      return m;
    }
    case ModelKind::mlp: {
      auto m = std::make_unique<Mlp>(spec);
      m->init(rng);
      return m;
    }
    case ModelKind::cnn_small: {
      auto m = std::make_unique<CnnSmall>(spec);
      m->init(rng);
      return m;
    }
  }
  throw DomainError("unknown model kind");
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

double softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return mx + std::log(sum) - logits[label];
}

}  // namespace batchorder
