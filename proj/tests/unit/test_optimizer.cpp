#include <doctest.h>

#include <cmath>

#include "batchorder/dataset.hpp"
#include "batchorder/errors.hpp"
#include "batchorder/optimizer.hpp"
#include "batchorder/trainer.hpp"

using namespace batchorder;

namespace {

GradientVector grad(std::vector<double> v, std::string layout = "L") { return {std::move(v), std::move(layout)}; }

}  // namespace

TEST_CASE("sgd step") {
  Optimizer o({OptimizerKind::sgd, 0.5}, 2, "L");
  std::vector<double> p{1.0, -1.0};
  o.step(p, grad({2.0, -4.0}));
  CHECK(p == std::vector<double>{0.0, 1.0});
  CHECK(o.step_count() == 1);
}

TEST_CASE("momentum steps accumulate velocity") {
  OptimizerConfig c{OptimizerKind::momentum, 0.1};
  c.momentum = 0.9;
  Optimizer o(c, 1, "L");
  std::vector<double> p{0.0};
  o.step(p, grad({1.0}));  // v = −0.1
  CHECK(p[0] == doctest::Approx(-0.1));
  o.step(p, grad({1.0}));  // v = −0.09 − 0.1
  CHECK(p[0] == doctest::Approx(-0.1 - 0.19));
  CHECK(o.velocity()[0] == doctest::Approx(-0.19));
}

TEST_CASE("momentum with mu = 0 is bit-identical to sgd") {
  Rng rng(9, 9);
  OptimizerConfig m{OptimizerKind::momentum, 0.037};
  m.momentum = 0.0;
  Optimizer a({OptimizerKind::sgd, 0.037}, 50, "L"), b(m, 50, "L");
  std::vector<double> pa(50), pb(50);
  for (std::size_t i = 0; i < 50; ++i) pa[i] = pb[i] = rng.normal();
  for (int step = 0; step < 500; ++step) {
    std::vector<double> g(50);
    for (auto& x : g) x = rng.normal();
    a.step(pa, grad(g));
    b.step(pb, grad(g));
  }
  CHECK(pa == pb);
}

TEST_CASE("adam transcript against a hand-written reference") {
  OptimizerConfig c{OptimizerKind::adam, 0.01};
  Optimizer o(c, 2, "L");
  std::vector<double> p{1.0, 2.0};
  const std::vector<std::vector<double>> gs{{0.5, -1.0}, {0.1, 0.3}, {-0.2, 0.0}};
  // Reference: plain loops in long double.
  long double m[2] = {0, 0}, v[2] = {0, 0}, th[2] = {1.0L, 2.0L};
  for (int t = 1; t <= 3; ++t) {
    o.step(p, grad(gs[t - 1]));
    for (int i = 0; i < 2; ++i) {
      const long double g = gs[t - 1][i];
      m[i] = 0.9L * m[i] + 0.1L * g;
      v[i] = 0.999L * v[i] + 0.001L * g * g;
      const long double mh = m[i] / (1.0L - std::pow(0.9L, t));
      const long double vh = v[i] / (1.0L - std::pow(0.999L, t));
      th[i] -= 0.01L * mh / (std::sqrt(vh) + 1e-8L);
      CHECK(p[i] == doctest::Approx(double(th[i])).epsilon(1e-12));
    }
  }
  // The first Adam step moves each coordinate by about −η·sign(g).
  Optimizer fresh(c, 1, "L");
  std::vector<double> q{0.0};
  fresh.step(q, grad({123.0}));
  CHECK(q[0] == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("optimizers reject foreign gradients") {
  Optimizer o({OptimizerKind::sgd, 0.1}, 2, "A");
  std::vector<double> p{0.0, 0.0};
  CHECK_THROWS_AS(o.step(p, grad({1.0, 1.0}, "B")), LayoutError);
  CHECK_THROWS_AS(o.step(p, grad({1.0}, "A")), LayoutError);
}

TEST_CASE("trainer steps on a batch and reports the pre-step loss") {
  Rng rng(1, 1);
  auto m = make_model({ModelKind::linreg2, 1, 1}, rng);
  m->set_params(std::vector<double>{0.0, 0.0});
  Trainer t(std::move(m), {OptimizerKind::sgd, 0.1});
  Batch b{Tensor({1, 1}, {1.0}), {2.0}, {0}};
  CHECK(t.train_batch(b) == doctest::Approx(4.0));
  // gradient of r² at r = −2: slope −4, intercept −4.
  CHECK(t.model().params()[0] == doctest::Approx(0.4));
  CHECK(t.model().params()[1] == doctest::Approx(0.4));
  CHECK(t.steps() == 1);
}

TEST_CASE("trainer raises NumericError when training diverges") {
  Rng rng(1, 1);
  const Dataset d = generate_linreg_data(50, rng);
  Trainer t(make_model({ModelKind::linreg2, 1, 1}, rng), {OptimizerKind::sgd, 10.0});
  ShuffledSource src(d, 1, 0);
  bool threw = false;
  try {
    for (int e = 1; e <= 20; ++e) {
      src.reset(e);
      t.train_epoch(src, e);
    }
  } catch (const NumericError&) {
    threw = true;
  }
  CHECK(threw);
}
