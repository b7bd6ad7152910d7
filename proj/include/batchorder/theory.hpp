#pragma once

// Numerical checks of the order-dependence theory: the second-order term ξ,
// the order-statistic constants K_N and K∞, the attack-success condition,
// the convergence-bound bias term and the poisoning sample-size bound.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "batchorder/dataset.hpp"
#include "batchorder/trainer.hpp"

namespace batchorder {

using CurvatureFn = std::function<double(double)>;

/// ξ = 2/(N(N−1)) Σ_j Σ_{k<j} g(X_j)·X_k in the given order. g defaults to 1.
/// Throws DomainError when N < 2.
double xi_term(std::span<const double> x, const CurvatureFn& g = {});

/// A standardized scalar distribution (mean 0, variance 1).
struct Distribution {
  std::string name;
  std::function<double(Rng&)> sample;
  std::function<double(double)> pdf;  ///< empty for discrete distributions
  double lo = -10.0, hi = 10.0;       ///< integration domain for pdf
};

Distribution standard_normal();
Distribution rademacher();
/// Uniform on [−√3, √3].
Distribution uniform_standardized();
Distribution parse_distribution(const std::string& name);

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo K_N = 2/(N(N−1)) Σ_i Σ_{j<i} E Z_(j), order statistics
/// descending. Trial t draws from stream (seed, monte_carlo t), so the
/// result does not depend on the thread count.
Estimate estimate_Kn(std::size_t n, const Distribution& dist, std::size_t trials, std::uint64_t seed,
                     bool parallel = true);

/// K∞ = 2 ∫_u ∫_{v≥u} v φ(u) φ(v) dv du by nested adaptive Gauss–Kronrod
/// quadrature over [lo, hi]². Throws DomainError if ∫φ differs from 1 by
/// more than 1e-6.
double k_infinity(const std::function<double(double)>& pdf, double lo, double hi, double tol = 1e-6);
/// Throws DomainError for distributions without a density.
double k_infinity(const Distribution& d, double tol = 1e-6);

struct XiGap {
  Estimate sorted;  ///< ξ† with the sample sorted descending
  Estimate random;  ///< ξ̄ in draw order
  Estimate gap;     ///< per-trial ξ† − ξ̄
};

/// Monte Carlo E[ξ†] and E[ξ̄] for iid samples of size N.
XiGap xi_order_gap(std::size_t n, const Distribution& dist, std::size_t trials, std::uint64_t seed,
                   const CurvatureFn& g = {}, bool parallel = true);

/// Exact E[ξ†] and E[ξ̄] (zero standard errors) for a discrete distribution
/// by enumerating all |support|^N outcomes.
XiGap xi_order_gap_exact(std::span<const double> support, std::span<const double> probs, std::size_t n,
                         const CurvatureFn& g = {});

struct AttackCondition {
  double ratio = 0.0;          ///< σ/μ
  double rhs = 0.0;            ///< K·(M/m − 1)
  double rhs_sqrt_pi = 0.0;    ///< √π·(M/m − 1)
  bool holds = false;          ///< ratio ≥ rhs
  bool holds_sqrt_pi = false;  ///< ratio ≥ rhs_sqrt_pi
};

/// σ/μ ≥ K·(M/m − 1). Throws DomainError for μ ≤ 0, m ≤ 0 or M < m.
bool attack_success_condition(double mu, double sigma, double m, double big_m, double k);
/// The same inequality with both K and √π as the constant.
AttackCondition attack_condition_report(double mu, double sigma, double m, double big_m, double k);

/// b = ⟨∇L̂, ĝ − ∇L̂⟩.
double bias_term(std::span<const double> full_gradient, std::span<const double> batch_gradient);

/// Records b_k for every training step by evaluating the full-dataset
/// gradient at θ_k. Attach with trainer.set_observer(tracer.observer()).
class BiasTracer {
 public:
  struct EpochStats {
    int epoch = 0;
    std::size_t steps = 0;
    double mean = 0.0;
    double std_error = 0.0;
  };

  /// Throws DomainError when examples × parameters exceeds `max_work`.
  BiasTracer(const Dataset& data, const Model& model, double max_work = 5e8);

  StepObserver observer();
  const std::vector<double>& trace() const noexcept { return trace_; }
  const std::vector<int>& epochs_of_steps() const noexcept { return epochs_; }
  std::vector<EpochStats> per_epoch() const;

 private:
  const Dataset* data_;
  std::vector<double> trace_;
  std::vector<int> epochs_;
};

enum class BoundMode { oned_exact, oned_smalleps, multivariate };
BoundMode parse_bound_mode(const std::string& text);

struct BoundInputs {
  std::vector<double> mu{0.0};
  double sigma = 1.0;  ///< 1-D modes
  double epsilon = 0.1;
  double p_conf = 0.05;
  std::vector<double> target{0.0};
  /// Row-major k×k factor with AAᵀ = Σ (multivariate mode).
  std::vector<double> a;
};

/// Samples needed so that the closest of n draws lies within ε of the
/// target with probability 1 − p. Returns at least 1. Throws DomainError for
/// invalid inputs and when A is singular.
double sample_size_bound(const BoundInputs& in, BoundMode mode);

/// Fraction of `trials` in which `samples` draws of N(μ, σ²) include one
/// within ε of the target.
double sample_size_hit_rate(const BoundInputs& in, std::size_t samples, std::size_t trials, std::uint64_t seed);

}  // namespace batchorder
