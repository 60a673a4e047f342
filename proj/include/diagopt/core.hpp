#pragma once

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace diagopt {

using Vector = Eigen::VectorXd;

/// Strong-convexity and smoothness constants shared by every component of a
/// finite sum. The contraction factor rho = (kappa-1)/(kappa+1) is always
/// derived from (mu, L), never stored on its own.
struct ConvexityConstants {
  double mu = 1.0;  // strong convexity modulus, > 0
  double L = 1.0;   // gradient Lipschitz constant, >= mu

  ConvexityConstants() = default;
  ConvexityConstants(double mu_in, double L_in) : mu(mu_in), L(L_in) {
    if (!(mu > 0.0) || !(L >= mu) || !std::isfinite(L))
      throw std::invalid_argument("ConvexityConstants: need 0 < mu <= L < inf");
  }

  double kappa() const { return L / mu; }
  double rho() const { return (kappa() - 1.0) / (kappa() + 1.0); }
};

/// A finite sum f = (1/n) sum_i f_i presented through per-component value and
/// gradient calls. Components are indexed 0..n-1 in code; diagnostics use the
/// conventional 1-based f_1..f_n. Implementations must be immutable after
/// construction so concurrent read-only evaluation is safe.
class ComponentOracle {
 public:
  virtual ~ComponentOracle() = default;

  virtual long components() const = 0;  // n
  virtual long dimension() const = 0;   // p

  /// Bounds (mu, L) valid for every single component.
  virtual ConvexityConstants constants() const = 0;

  virtual double component_value(long i, const Vector& x) const = 0;
  virtual Vector component_gradient(long i, const Vector& x) const = 0;

 protected:
  void check_component(long i) const {
    if (i < 0 || i >= components())
      throw std::out_of_range("component index f_" + std::to_string(i + 1) +
                              " outside f_1..f_" + std::to_string(components()));
  }
  void check_dimension(const Vector& x) const {
    if (x.size() != dimension())
      throw std::invalid_argument("point has length " + std::to_string(x.size()) +
                                  ", problem dimension is " + std::to_string(dimension()));
  }
};

/// Running tallies of oracle calls. Attached to the metering wrapper rather
/// than to any solver, so every method is charged through the same channel.
/// Counters are atomic; independent runs over one immutable problem may
/// share nothing else.
struct EvalCounter {
  std::atomic<long long> gradient_evals{0};
  std::atomic<long long> function_evals{0};

  void charge_gradient(long long k = 1) { gradient_evals.fetch_add(k, std::memory_order_relaxed); }
  void charge_function(long long k = 1) { function_evals.fetch_add(k, std::memory_order_relaxed); }
  long long gradients() const { return gradient_evals.load(std::memory_order_relaxed); }
  long long functions() const { return function_evals.load(std::memory_order_relaxed); }
};

/// Non-owning view that counts every component call against an EvalCounter.
/// One call to component_gradient charges exactly one gradient evaluation of
/// the wrapped oracle; composite oracles (see group_components) are metered
/// by wrapping the base first, so their true underlying cost is charged.
class MeteredOracle final : public ComponentOracle {
 public:
  explicit MeteredOracle(const ComponentOracle& base) : base_(&base) {}

  long components() const override { return base_->components(); }
  long dimension() const override { return base_->dimension(); }
  ConvexityConstants constants() const override { return base_->constants(); }

  double component_value(long i, const Vector& x) const override {
    counter_.charge_function();
    return base_->component_value(i, x);
  }
  Vector component_gradient(long i, const Vector& x) const override {
    counter_.charge_gradient();
    return base_->component_gradient(i, x);
  }

  const EvalCounter& counter() const { return counter_; }

 private:
  const ComponentOracle* base_;
  mutable EvalCounter counter_;
};

/// (1/n) sum_i grad f_i(x); costs n gradient evaluations.
inline Vector full_gradient(const ComponentOracle& oracle, const Vector& x) {
  if (x.size() != oracle.dimension())
    throw std::invalid_argument("full_gradient: point length " + std::to_string(x.size()) +
                                " != dimension " + std::to_string(oracle.dimension()));
  const long n = oracle.components();
  Vector acc = Vector::Zero(oracle.dimension());
  for (long i = 0; i < n; ++i) acc += oracle.component_gradient(i, x);
  return acc / double(n);
}

/// (1/n) sum_i f_i(x).
inline double objective_value(const ComponentOracle& oracle, const Vector& x) {
  if (x.size() != oracle.dimension())
    throw std::invalid_argument("objective_value: point length " + std::to_string(x.size()) +
                                " != dimension " + std::to_string(oracle.dimension()));
  const long n = oracle.components();
  double acc = 0.0;
  for (long i = 0; i < n; ++i) acc += oracle.component_value(i, x);
  return acc / double(n);
}

/// Central-difference gradient of one component, the reference every analytic
/// gradient is tested against. Default step balances truncation against
/// round-off in double precision.
inline Vector finite_difference_gradient(const ComponentOracle& oracle, long i, const Vector& x,
                                         double h = 1e-6) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: h must be positive");
  if (x.size() != oracle.dimension())
    throw std::invalid_argument("finite_difference_gradient: dimension mismatch");
  if (!x.allFinite()) throw std::invalid_argument("finite_difference_gradient: x must be finite");
  Vector g(x.size());
  Vector probe = x;
  for (long j = 0; j < x.size(); ++j) {
    const double xj = x[j];
    probe[j] = xj + h;
    const double fp = oracle.component_value(i, probe);
    probe[j] = xj - h;
    const double fm = oracle.component_value(i, probe);
    probe[j] = xj;
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace diagopt
