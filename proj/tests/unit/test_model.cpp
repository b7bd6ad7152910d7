#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "batchorder/errors.hpp"
#include "batchorder/model.hpp"

using namespace batchorder;

namespace {

struct Case {
  ModelSpec spec;
  std::size_t features;
};

std::vector<Case> zoo() {
  ModelSpec cnn{ModelKind::cnn_small, 64, 3};
  cnn.image_height = 8;
  cnn.image_width = 8;
  cnn.conv1_channels = 2;
  cnn.conv2_channels = 3;
  return {{{ModelKind::linreg2, 1, 1}, 1},
          {{ModelKind::logreg, 5, 3}, 5},
          {{ModelKind::mlp, 4, 3, 6}, 4},
          {cnn, 64}};
}

struct Data {
  Tensor x;
  std::vector<double> y;
};

Data random_batch(const Model& m, std::size_t n, std::size_t features, Rng& rng) {
  Data d{Tensor({n, features}), std::vector<double>(n)};
  for (auto& v : d.x.data()) v = rng.uniform(0.0, 1.0);
  for (auto& t : d.y) t = m.is_classifier() ? double(rng.index(m.spec().classes)) : rng.uniform(-2.0, 2.0);
  return d;
}

}  // namespace

TEST_CASE("backprop matches central finite differences across the zoo") {
  Rng rng(7, 7);
  for (const auto& c : zoo()) {
    CAPTURE(to_string(c.spec.kind));
    const auto model = make_model(c.spec, rng);
    const Data d = random_batch(*model, 5, c.features, rng);
    const GradientVector g = model->backward(d.x, d.y);
    auto probe = model->clone();
    const auto f = [&](const Tensor& theta) {
      probe->set_params(theta.data());
      return probe->forward_loss(d.x, d.y).mean;
    };
    const Tensor theta({model->param_count()}, std::vector<double>(model->params().begin(), model->params().end()));
    const GradientVector fd = finite_diff_gradient(f, theta, 1e-6);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      num += (g.values[i] - fd.values[i]) * (g.values[i] - fd.values[i]);
      den += fd.values[i] * fd.values[i];
    }
    CHECK(std::sqrt(num / den) < 1e-4);
  }
}

TEST_CASE("loss and gradient are invariant to example order within a batch") {
  Rng rng(8, 8);
  for (const auto& c : zoo()) {
    const auto model = make_model(c.spec, rng);
    const Data d = random_batch(*model, 9, c.features, rng);
    std::vector<std::size_t> perm{8, 3, 0, 5, 1, 7, 2, 6, 4};
    Data p{Tensor({9, c.features}), std::vector<double>(9)};
    for (std::size_t i = 0; i < 9; ++i) {
      std::copy(d.x.row(perm[i]).begin(), d.x.row(perm[i]).end(), p.x.row(i).begin());
      p.y[i] = d.y[perm[i]];
    }
    const auto a = model->loss_and_gradient(d.x, d.y);
    const auto b = model->loss_and_gradient(p.x, p.y);
    CHECK(b.loss.mean == doctest::Approx(a.loss.mean).epsilon(1e-12));
    for (std::size_t i = 0; i < a.gradient.size(); ++i)
      CHECK(b.gradient.values[i] == doctest::Approx(a.gradient.values[i]).epsilon(1e-12).scale(1e-12));
  }
}

TEST_CASE("linreg2 uses the squared residual") {
  Rng rng(1, 1);
  auto m = make_model({ModelKind::linreg2, 1, 1}, rng);
  CHECK(m->param_count() == 2);
  // params: slope then intercept.
  const std::vector<double> theta{2.0, 17.0};
  m->set_params(theta);
  const Tensor x({2, 1}, {1.0, 3.0});
  const std::vector<double> y{20.0, 23.0};  // predictions 19 and 23
  const auto l = m->forward_loss(x, y);
  CHECK(l.per_example[0] == doctest::Approx(1.0));
  CHECK(l.per_example[1] == doctest::Approx(0.0));
  CHECK(l.mean == doctest::Approx(0.5));
  const auto e = m->signed_errors(x, y);
  CHECK(e[0] == doctest::Approx(-1.0));
  // d/dθ of mean r²: slope 2·(−1)·1/2, intercept 2·(−1)/2.
  const auto g = m->backward(x, y);
  CHECK(g.values[0] == doctest::Approx(-1.0));
  CHECK(g.values[1] == doctest::Approx(-1.0));
}

TEST_CASE("softmax cross-entropy is stable for large logits") {
  const std::vector<double> z{1000.0, 0.0, -1000.0};
  CHECK(softmax_cross_entropy(z, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(softmax_cross_entropy(z, 1) == doctest::Approx(1000.0));
  const std::vector<double> u{0.0, 0.0};
  CHECK(softmax_cross_entropy(u, 1) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("argmax ties go to the lowest index") {
  const std::vector<double> v{1.0, 3.0, 3.0};
  CHECK(argmax(v) == 1);
}

TEST_CASE("make_model is deterministic and fan-in scaled") {
  Rng a(3, stream_id(Stream::init)), b(3, stream_id(Stream::init));
  const ModelSpec s{ModelKind::mlp, 784, 10, 64};
  const auto m1 = make_model(s, a), m2 = make_model(s, b);
  CHECK(std::equal(m1->params().begin(), m1->params().end(), m2->params().begin()));
  CHECK(m1->param_count() == 784 * 64 + 64 + 64 * 10 + 10);
  const double bound = 1.0 / std::sqrt(784.0);
  for (std::size_t i = 0; i < 784 * 64; ++i) REQUIRE(std::abs(m1->params()[i]) <= bound);
}

TEST_CASE("models reject batches that do not fit") {
  Rng rng(2, 2);
  auto m = make_model({ModelKind::logreg, 3, 2}, rng);
  CHECK_THROWS_AS(m->outputs(Tensor({2, 4})), DimensionError);
  CHECK_THROWS_AS(m->forward_loss(Tensor({2, 3}), std::vector<double>{0.0}), DimensionError);
  CHECK_THROWS_AS(m->forward_loss(Tensor({1, 3}), std::vector<double>{5.0}), DimensionError);
  CHECK_THROWS_AS(m->set_params(std::vector<double>(3)), LayoutError);
}

TEST_CASE("cnn_small on 28x28 has the documented layout") {
  Rng rng(4, 4);
  const auto m = make_model({ModelKind::cnn_small, 784, 10}, rng);
  // conv 1→8 3×3, conv 8→16 3×3, dense 16·7·7→10.
  CHECK(m->param_count() == (8 * 9 + 8) + (16 * 8 * 9 + 16) + (16 * 7 * 7 * 10 + 10));
  const Tensor x({2, 784});
  CHECK(m->outputs(x).shape() == std::vector<std::size_t>{2, 10});
}
