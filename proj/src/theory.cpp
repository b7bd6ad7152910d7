#include "batchorder/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "batchorder/errors.hpp"
#include "batchorder/gradient.hpp"

namespace batchorder {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

Estimate summarize(std::span<const double> v) {
  Estimate e;
  const double n = static_cast<double>(v.size());
  e.value = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - e.value) * (x - e.value);
    e.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return e;
}

/// 2/(N(N−1)) Σ_j (N−j) x_(j) over an already sorted-descending sample.
double kn_statistic(std::span<const double> sorted) {
  const std::size_t n = sorted.size();
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += static_cast<double>(n - 1 - j) * sorted[j];
  return 2.0 * s / (static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace

double xi_term(std::span<const double> x, const CurvatureFn& g) {
  const std::size_t n = x.size();
  if (n < 2) throw DomainError("xi needs at least two terms");
  double prefix = 0.0, s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j > 0) s += (g ? g(x[j]) : 1.0) * prefix;
    prefix += x[j];
  }
  return 2.0 * s / (static_cast<double>(n) * static_cast<double>(n - 1));
}

Distribution standard_normal() {
  return {"normal", [](Rng& r) { return r.normal(); }, normal_pdf, -10.0, 10.0};
}

Distribution rademacher() {
  return {"rademacher", [](Rng& r) { return (r.next_u32() & 1u) ? 1.0 : -1.0; }, {}, -1.0, 1.0};
}

Distribution uniform_standardized() {
  const double h = std::numbers::sqrt3;
  return {"uniform", [h](Rng& r) { return r.uniform(-h, h); }, [h](double x) { return std::abs(x) <= h ? 0.5 / h : 0.0; },
          -h, h};
}

Distribution parse_distribution(const std::string& name) {
  if (name == "normal") return standard_normal();
  if (name == "rademacher") return rademacher();
  if (name == "uniform") return uniform_standardized();
  throw DomainError("unknown distribution '" + name + "'");
}

Estimate estimate_Kn(std::size_t n, const Distribution& dist, std::size_t trials, std::uint64_t seed, bool parallel) {
  if (n < 2) throw DomainError("K_N needs N >= 2");
  if (trials == 0) throw DomainError("at least one trial is required");
  std::vector<double> per_trial(trials);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(seed, stream_id(Stream::monte_carlo, t));
    std::vector<double> z(n);
    for (auto& v : z) v = dist.sample(rng);
    std::sort(z.begin(), z.end(), std::greater<>());
    per_trial[t] = kn_statistic(z);
  }
  return summarize(per_trial);
}

double k_infinity(const std::function<double(double)>& pdf, double lo, double hi, double tol) {
  using boost::math::quadrature::gauss_kronrod;
  if (!(lo < hi)) throw DomainError("integration domain is empty");
  constexpr unsigned depth = 15;
  const double mass = gauss_kronrod<double, 31>::integrate(pdf, lo, hi, depth, tol * 1e-3);
  if (std::abs(mass - 1.0) > 1e-6) throw DomainError("density integrates to " + std::to_string(mass) + ", not 1");
  auto inner = [&](double u) {
    if (u >= hi) return 0.0;
    return gauss_kronrod<double, 31>::integrate([&](double v) { return v * pdf(v); }, u, hi, depth, tol * 1e-3);
  };
  const double outer =
      gauss_kronrod<double, 31>::integrate([&](double u) { return pdf(u) * inner(u); }, lo, hi, depth, tol * 1e-2);
  return 2.0 * outer;
}

double k_infinity(const Distribution& d, double tol) {
  if (!d.pdf) throw DomainError("distribution '" + d.name + "' has no density");
  return k_infinity(d.pdf, d.lo, d.hi, tol);
}

XiGap xi_order_gap(std::size_t n, const Distribution& dist, std::size_t trials, std::uint64_t seed,
                   const CurvatureFn& g, bool parallel) {
  if (n < 2) throw DomainError("xi needs N >= 2");
  if (trials == 0) throw DomainError("at least one trial is required");
  std::vector<double> sorted(trials), random(trials), gap(trials);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(seed, stream_id(Stream::monte_carlo, t));
    std::vector<double> x(n);
    for (auto& v : x) v = dist.sample(rng);
    random[t] = xi_term(x, g);
    std::sort(x.begin(), x.end(), std::greater<>());
    sorted[t] = xi_term(x, g);
    gap[t] = sorted[t] - random[t];
  }
  return {summarize(sorted), summarize(random), summarize(gap)};
}

XiGap xi_order_gap_exact(std::span<const double> support, std::span<const double> probs, std::size_t n,
                         const CurvatureFn& g) {
  if (n < 2) throw DomainError("xi needs N >= 2");
  if (support.empty() || support.size() != probs.size()) throw DomainError("support and probabilities must align");
  const std::size_t k = support.size();
  double outcomes = 1.0;
  for (std::size_t i = 0; i < n; ++i) outcomes *= static_cast<double>(k);
  if (outcomes > 1e7) throw DomainError("too many outcomes to enumerate");
  std::vector<std::size_t> digit(n, 0);
  std::vector<double> x(n);
  double e_sorted = 0.0, e_random = 0.0;
  for (;;) {
    double p = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = support[digit[i]];
      p *= probs[digit[i]];
    }
    e_random += p * xi_term(x, g);
    std::sort(x.begin(), x.end(), std::greater<>());
    e_sorted += p * xi_term(x, g);
    std::size_t i = 0;
    while (i < n && ++digit[i] == k) digit[i++] = 0;
    if (i == n) break;
  }
  XiGap r;
  r.sorted.value = e_sorted;
  r.random.value = e_random;
  r.gap.value = e_sorted - e_random;
  return r;
}

AttackCondition attack_condition_report(double mu, double sigma, double m, double big_m, double k) {
  if (!(mu > 0.0)) throw DomainError("attack condition assumes a positive gradient mean");
  if (!(m > 0.0)) throw DomainError("curvature lower bound m must be positive");
  if (big_m < m) throw DomainError("curvature bounds need m <= M");
  if (sigma < 0.0) throw DomainError("sigma must be non-negative");
  AttackCondition c;
  c.ratio = sigma / mu;
  c.rhs = k * (big_m / m - 1.0);
  c.rhs_sqrt_pi = std::sqrt(std::numbers::pi) * (big_m / m - 1.0);
  c.holds = c.ratio >= c.rhs;
  c.holds_sqrt_pi = c.ratio >= c.rhs_sqrt_pi;
  return c;
}

bool attack_success_condition(double mu, double sigma, double m, double big_m, double k) {
  return attack_condition_report(mu, sigma, m, big_m, k).holds;
}

double bias_term(std::span<const double> full, std::span<const double> batch) {
  if (full.size() != batch.size()) throw DimensionError("gradient sizes differ");
  double b = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) b += full[i] * (batch[i] - full[i]);
  return b;
}

BiasTracer::BiasTracer(const Dataset& data, const Model& model, double max_work) : data_(&data) {
  const double work = static_cast<double>(data.size()) * static_cast<double>(model.param_count());
  if (work > max_work)
    throw DomainError("full-gradient bias tracing refused: " + std::to_string(data.size()) + " examples × " +
                      std::to_string(model.param_count()) + " parameters is too large");
}

StepObserver BiasTracer::observer() {
  return [this](const StepEvent& ev) {
    const auto full = ev.model.backward(data_->inputs, data_->targets);
    trace_.push_back(bias_term(full.values, ev.result.gradient.values));
    epochs_.push_back(ev.epoch);
  };
}

std::vector<BiasTracer::EpochStats> BiasTracer::per_epoch() const {
  std::vector<EpochStats> out;
  std::size_t i = 0;
  while (i < trace_.size()) {
    std::size_t j = i;
    while (j < trace_.size() && epochs_[j] == epochs_[i]) ++j;
    const Estimate e = summarize(std::span<const double>(trace_).subspan(i, j - i));
    out.push_back({epochs_[i], j - i, e.value, e.std_error});
    i = j;
  }
  return out;
}

BoundMode parse_bound_mode(const std::string& text) {
  if (text == "oned_exact") return BoundMode::oned_exact;
  if (text == "oned_smalleps") return BoundMode::oned_smalleps;
  if (text == "multivariate") return BoundMode::multivariate;
  throw DomainError("unknown bound mode '" + text + "'");
}

namespace {

/// ln(numerator) / ln(1 − hit), with hit ≥ 1 meaning a single draw suffices.
double samples_for(double log_numerator, double hit) {
  if (!(hit > 0.0)) throw DomainError("target is unreachable: hit probability is zero");
  if (hit >= 1.0) return 1.0;
  return std::max(1.0, log_numerator / std::log1p(-hit));
}

}  // namespace

double sample_size_bound(const BoundInputs& in, BoundMode mode) {
  if (!(in.epsilon > 0.0)) throw DomainError("epsilon must be positive");
  if (!(in.p_conf > 0.0 && in.p_conf < 1.0)) throw DomainError("p must lie in (0, 1)");
  if (in.mu.size() != in.target.size() || in.mu.empty()) throw DimensionError("mu and target must have equal size");

  if (mode != BoundMode::multivariate) {
    if (in.mu.size() != 1) throw DimensionError("one-dimensional bound needs scalar mu and target");
    if (!(in.sigma > 0.0)) throw DomainError("sigma must be positive");
    const double mu = in.mu[0], t = in.target[0], s = in.sigma, e = in.epsilon;
    const double hit = mode == BoundMode::oned_exact ? normal_cdf((e - mu + t) / s) - normal_cdf((-e - mu + t) / s)
                                                     : 2.0 * (e / s) * normal_pdf((t - mu) / s);
    return samples_for(std::log(in.p_conf), hit);
  }

  const std::size_t k = in.mu.size();
  if (in.a.size() != k * k) throw DimensionError("A must be k×k");
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> a(in.a.data(),
                                                                                                   k, k);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) throw DomainError("covariance factor A is singular; reconstruction is impossible");
  Eigen::VectorXd diff(k);
  for (std::size_t i = 0; i < k; ++i) diff[i] = in.target[i] - in.mu[i];
  const Eigen::VectorXd z = lu.solve(diff);
  const double a_norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  const double r = in.epsilon / a_norm;
  const double log_num = std::log(-std::expm1(std::log1p(-in.p_conf) / static_cast<double>(k)));
  double n = 1.0;
  for (std::size_t i = 0; i < k; ++i)
    n = std::max(n, samples_for(log_num, normal_cdf(r + z[i]) - normal_cdf(-r + z[i])));
  return n;
}

double sample_size_hit_rate(const BoundInputs& in, std::size_t samples, std::size_t trials, std::uint64_t seed) {
  if (in.mu.size() != 1 || in.target.size() != 1) throw DimensionError("hit rate is one-dimensional");
  if (trials == 0) throw DomainError("at least one trial is required");
  std::vector<char> hit(trials, 0);
#pragma omp parallel for schedule(static)
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(seed, stream_id(Stream::monte_carlo, t));
    for (std::size_t s = 0; s < samples && !hit[t]; ++s) {
      const double y = in.mu[0] + in.sigma * rng.normal();
      if (std::abs(in.target[0] - y) <= in.epsilon) hit[t] = 1;
    }
  }
  return static_cast<double>(std::count(hit.begin(), hit.end(), char{1})) / static_cast<double>(trials);
}

}  // namespace batchorder
