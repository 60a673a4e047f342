#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "diagopt/core.hpp"
#include "diagopt/csv.hpp"

namespace diagopt::rates {

/// Gradient descent contraction factor (kappa-1)/(kappa+1) at stepsize
/// 2/(mu+L).
inline double rho_of(double kappa) {
  if (!(kappa >= 1.0)) throw std::invalid_argument("rho_of: kappa must be >= 1");
  return (kappa - 1.0) / (kappa + 1.0);
}

inline double kappa_of_rho(double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("kappa_of_rho: rho must be in [0,1)");
  return (1.0 + rho) / (1.0 - rho);
}

/// Per-iteration linear factor of the known IAG worst-case bound.
inline double iag_factor(long n, double kappa) {
  return 1.0 - 2.0 / (25.0 * double(n) * (2.0 * double(n) + 1.0) * (kappa + 1.0) * (kappa + 1.0));
}

/// n-th power of iag_factor, evaluated in log space; the factor is so close
/// to one that direct powering would lose most of the decrement.
inline double iag_factor_per_pass(long n, double kappa) {
  const double dec = 2.0 / (25.0 * double(n) * (2.0 * double(n) + 1.0) * (kappa + 1.0) * (kappa + 1.0));
  return std::exp(double(n) * std::log1p(-dec));
}

/// Per-iteration linear factor of the SAG expectation bound. Display only:
/// the bound carries an unspecified leading constant.
inline double sag_factor(long n, double kappa) {
  return 1.0 - std::min(1.0 / (16.0 * kappa), 1.0 / (8.0 * double(n)));
}

/// h(gamma) = gamma^{n+1} - (1 + rho/n) gamma^n + rho/n, evaluated in the
/// factored form gamma^n (gamma - 1) + (rho/n)(1 - gamma^n) which avoids the
/// cancellation of the expanded polynomial near gamma = 1.
inline double h_poly(double gamma, long n, double rho) {
  const double gn = std::pow(gamma, double(n));
  return gn * (gamma - 1.0) + (rho / double(n)) * (1.0 - gn);
}

inline double h_poly_derivative(double gamma, long n, double rho) {
  return (double(n) + 1.0) * std::pow(gamma, double(n)) -
         (double(n) + rho) * std::pow(gamma, double(n) - 1.0);
}

/// The unique root of h in [0, 1): the per-iteration linear convergence
/// factor of the double incremental aggregated gradient method. h is
/// positive at 0 and strictly negative at its lone interior critical point
/// gamma* = (n+rho)/(n+1), so the root is bracketed by [0, gamma*]; bisection
/// to width 1e-13 plus a few Newton steps pins it down. (Newton alone is
/// useless here: h is extremely flat near 1 for large n.)
inline double gamma0(long n, double rho, double tol = 1e-12) {
  if (n < 1) throw std::invalid_argument("gamma0: n must be >= 1");
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("gamma0: rho must be in [0,1)");
  if (!(tol > 0.0)) throw std::invalid_argument("gamma0: tol must be positive");
  if (rho == 0.0) return 0.0;           // h(gamma) = gamma^n (gamma - 1)
  if (n == 1) return rho;               // h factors as (gamma - 1)(gamma - rho)
  double lo = 0.0;                      // h(lo) = rho/n > 0
  double hi = (double(n) + rho) / (double(n) + 1.0);  // h(hi) < 0
  while (hi - lo > 1e-13) {
    const double mid = 0.5 * (lo + hi);
    if (h_poly(mid, n, rho) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  double g = 0.5 * (lo + hi);
  for (int it = 0; it < 5; ++it) {
    const double hv = h_poly(g, n, rho);
    if (hv == 0.0) break;
    const double dv = h_poly_derivative(g, n, rho);
    if (dv == 0.0) break;
    const double next = g - hv / dv;
    if (!(next > lo && next < hi)) break;
    g = next;
  }
  if (!(std::fabs(h_poly(g, n, rho)) <= tol))
    throw std::runtime_error("gamma0: residual above tolerance at n=" + std::to_string(n) +
                             " rho=" + format_double(rho));
  return g;
}

/// Envelope constant a0 = max_{i in 1..n} rho (1 - (i-1)(1-rho)/n) gamma0^{-i}
/// so that the error at step k is bounded by a0 gamma0^k times the initial
/// error for all k >= 1.
inline double a0(long n, double rho, double gamma0_value) {
  if (n < 1) throw std::invalid_argument("a0: n must be >= 1");
  if (rho == 0.0) return 0.0;
  if (!(gamma0_value > 0.0 && gamma0_value < 1.0))
    throw std::invalid_argument("a0: gamma0 must lie in (0,1)");
  const double inv = 1.0 / gamma0_value;
  double gpow = 1.0;
  double best = 0.0;
  for (long i = 1; i <= n; ++i) {
    gpow *= inv;  // gamma0^{-i}
    const double term = rho * (1.0 - double(i - 1) * (1.0 - rho) / double(n)) * gpow;
    if (term > best) best = term;
  }
  return best;
}

/// Worst-case multiplier of the initial error at iterate k: a per-step bound
/// for k <= n, and a per-pass geometric bound beyond.
inline double prop2_bound(long long k, long n, double rho) {
  if (k < 1) throw std::invalid_argument("prop2_bound: k must be >= 1");
  if (k <= n) return rho * (1.0 - double(k - 1) * (1.0 - rho) / double(n));
  const double passes = double((k - 1) / n + 1);
  const double bracket = 1.0 - ((1.0 - rho) / double(n)) * std::min(1.0, double(n - 1) / 2.0);
  return std::pow(rho, passes) * bracket;
}

/// Bound on the error after m > 1 passes (iterate k = n(m-1)+1, i.e. mn
/// gradient evaluations): rho^m scaled by a bracket strictly below one for
/// n > 1, which is what beats plain gradient descent pass for pass.
inline double cor3_bound(long m, long n, double rho) {
  if (m < 2) throw std::invalid_argument("cor3_bound: stated for m >= 2 passes");
  const double bracket = 1.0 - ((1.0 - rho) / double(n)) * std::min(1.0, double(n - 1) / 2.0);
  return std::pow(rho, double(m)) * bracket;
}

// ---------------------------------------------------------------------------
// The scalar bound recurrence d^{k+1} = (rho/n)(d^k + ... + d^{k-n+1}) and
// its companion matrix.
// ---------------------------------------------------------------------------

/// Trajectory of the bound recurrence. Raw values decay geometrically and
/// underflow doubles after a few thousand steps, so entries are kept in a
/// power-of-two rescaled frame: d^k = scaled(k) * 2^{shift(k)}. Rescaling by
/// exact powers of two preserves every mantissa, so ratios are exact and
/// scale-free.
class BoundSequence {
 public:
  BoundSequence(long n, double rho) : n_(n), rho_(rho) {}

  long n() const { return n_; }
  double rho() const { return rho_; }
  std::size_t size() const { return scaled_.size(); }

  /// d^k as a double; underflows to zero once the true value leaves range.
  double value(std::size_t k) const { return std::ldexp(scaled_[k], clamp_exp(shift_[k])); }

  /// d^{k+1} / d^k, immune to underflow of the raw values.
  double ratio(std::size_t k) const {
    return scaled_[k + 1] / scaled_[k] * std::ldexp(1.0, clamp_exp(shift_[k + 1] - shift_[k]));
  }

  void append(double scaled, long long shift) {
    scaled_.push_back(scaled);
    shift_.push_back(shift);
  }

 private:
  static int clamp_exp(long long e) {
    if (e > 4000) return 4000;
    if (e < -4000) return -4000;  // ldexp underflows to 0 anyway
    return static_cast<int>(e);
  }

  long n_;
  double rho_;
  std::vector<double> scaled_;
  std::vector<long long> shift_;
};

/// Runs the bound recurrence for K steps past the n seed values d^0..d^{n-1}.
/// Each new value is rho/n times the literal sum of the previous n values.
inline BoundSequence bound_sequence(long n, double rho, const std::vector<double>& d_init, long long K) {
  if (n < 1) throw std::invalid_argument("bound_sequence: n must be >= 1");
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("bound_sequence: rho must be in [0,1)");
  if (static_cast<long>(d_init.size()) != n)
    throw std::invalid_argument("bound_sequence: need exactly n seed values");
  for (double d : d_init)
    if (!(d >= 0.0)) throw std::invalid_argument("bound_sequence: seed values must be non-negative");

  BoundSequence seq(n, rho);
  std::vector<double> window = d_init;  // last n values in the current frame
  long long shift = 0;
  std::size_t head = 0;  // circular index of the oldest window entry
  for (double d : d_init) seq.append(d, 0);
  for (long long k = 0; k < K; ++k) {
    double sum = 0.0;
    for (double w : window) sum += w;
    const double next = rho * sum / double(n);
    window[head] = next;
    head = (head + 1) % static_cast<std::size_t>(n);
    seq.append(next, shift);
    // Rescale before the frame drifts out of double range.
    double wmax = 0.0;
    for (double w : window) wmax = std::max(wmax, w);
    if (wmax > 0.0 && wmax < 0x1.0p-512) {
      for (double& w : window) w = std::ldexp(w, 1024);
      shift -= 1024;
    }
  }
  return seq;
}

/// The n x n non-negative matrix advancing the window of the bound
/// recurrence: first row all rho/n, ones on the subdiagonal. Its spectral
/// radius equals the root gamma0 of h.
struct CompanionMatrix {
  long n = 1;
  double rho = 0.5;

  Vector apply(const Vector& v) const {
    Vector out(n);
    out[0] = (rho / double(n)) * v.sum();
    if (n > 1) out.segment(1, n - 1) = v.head(n - 1);
    return out;
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    m.row(0).setConstant(rho / double(n));
    for (long i = 1; i < n; ++i) m(i, i - 1) = 1.0;
    return m;
  }
};

inline CompanionMatrix companion_matrix(long n, double rho) {
  if (n < 1) throw std::invalid_argument("companion_matrix: n must be >= 1");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("companion_matrix: rho must be in (0,1)");
  return CompanionMatrix{n, rho};
}

struct SpectralRadiusResult {
  double value = 0.0;        // dominant eigenvalue estimate
  double residual = 0.0;     // ||Mv - value v||_inf at the final vector
  long long iterations = 0;
  bool converged = false;
};

/// Power iteration with max-norm normalization from the all-ones vector.
/// The matrix is non-negative and irreducible, so the dominant eigenvalue is
/// simple and the iteration converges; the spectral gap narrows as n grows,
/// hence the generous iteration cap. Stops when successive Rayleigh
/// estimates differ by at most tol.
inline SpectralRadiusResult spectral_radius(const CompanionMatrix& m, double tol = 1e-13,
                                            long long max_iterations = 1000000) {
  if (!(tol > 0.0)) throw std::invalid_argument("spectral_radius: tol must be positive");
  SpectralRadiusResult res;
  Vector v = Vector::Ones(m.n);
  double estimate = 0.0;
  for (long long it = 1; it <= max_iterations; ++it) {
    const Vector w = m.apply(v);
    const double rayleigh = v.dot(w) / v.squaredNorm();
    const double scale = w.cwiseAbs().maxCoeff();
    v = w / scale;
    res.iterations = it;
    if (it > 1 && std::fabs(rayleigh - estimate) <= tol) {
      estimate = rayleigh;
      res.converged = true;
      break;
    }
    estimate = rayleigh;
  }
  res.value = estimate;
  res.residual = (m.apply(v) - estimate * v).cwiseAbs().maxCoeff();
  return res;
}

// ---------------------------------------------------------------------------
// Reports and tables.
// ---------------------------------------------------------------------------

/// Either kappa or rho, never both.
struct RateQuery {
  long n = 1;
  std::optional<double> kappa;
  std::optional<double> rho;

  static RateQuery from_kappa(long n, double kappa) {
    RateQuery q;
    q.n = n;
    q.kappa = kappa;
    return q;
  }
  static RateQuery from_rho(long n, double rho) {
    RateQuery q;
    q.n = n;
    q.rho = rho;
    return q;
  }

  double resolved_rho() const {
    if (kappa.has_value() == rho.has_value())
      throw std::invalid_argument("RateQuery: supply exactly one of kappa and rho");
    return kappa ? rho_of(*kappa) : *rho;
  }
};

struct RateReport {
  long n = 1;
  double kappa = 1.0;
  double rho = 0.0;
  double gd_factor_per_pass = 0.0;   // = rho
  double iag_factor_per_iter = 1.0;
  double iag_factor_per_pass = 1.0;
  double gamma0 = 0.0;
  double a0 = 0.0;
  double lambda_star = 0.0;          // spectral radius of the companion matrix
  double ratio = 1.0;                // gamma0^n / rho
  double root_residual = 0.0;        // |h(gamma0)|
};

inline RateReport make_rate_report(const RateQuery& query, double power_tol = 1e-13) {
  RateReport r;
  r.n = query.n;
  r.rho = query.resolved_rho();
  r.kappa = query.kappa ? *query.kappa : kappa_of_rho(r.rho);
  r.gd_factor_per_pass = r.rho;
  r.iag_factor_per_iter = iag_factor(r.n, r.kappa);
  r.iag_factor_per_pass = iag_factor_per_pass(r.n, r.kappa);
  r.gamma0 = gamma0(r.n, r.rho);
  r.root_residual = std::fabs(h_poly(r.gamma0, r.n, r.rho));
  if (r.rho == 0.0) {
    r.a0 = 0.0;
    r.lambda_star = 0.0;
    r.ratio = r.n == 1 ? 1.0 : 0.0;
    return r;
  }
  r.a0 = a0(r.n, r.rho, r.gamma0);
  const auto power = spectral_radius(companion_matrix(r.n, r.rho), power_tol);
  if (!power.converged)
    throw std::runtime_error("make_rate_report: power iteration stalled at estimate " +
                             format_double(power.value));
  r.lambda_star = power.value;
  r.ratio = std::pow(r.gamma0, double(r.n)) / r.rho;
  return r;
}

struct RatioCurvePoint {
  long n;
  double rho;
  double kappa;
  double gamma0;
  double ratio;  // gamma0^n / rho
};

/// gamma0^n / rho over a grid, one row per (n, grid value). The grid is a
/// list of rho values or of kappa values.
inline std::vector<RatioCurvePoint> ratio_curves(const std::vector<long>& n_list,
                                                 const std::vector<double>& grid,
                                                 bool grid_is_kappa = false) {
  std::vector<RatioCurvePoint> out;
  for (long n : n_list)
    for (double g : grid) {
      RatioCurvePoint pt;
      pt.n = n;
      pt.rho = grid_is_kappa ? rho_of(g) : g;
      pt.kappa = grid_is_kappa ? g : kappa_of_rho(g);
      pt.gamma0 = gamma0(n, pt.rho);
      pt.ratio = pt.rho > 0.0 ? std::pow(pt.gamma0, double(n)) / pt.rho : (n == 1 ? 1.0 : 0.0);
      out.push_back(pt);
    }
  return out;
}

inline void write_rate_reports_csv(const std::vector<RateReport>& reports, std::ostream& out) {
  out << "n,kappa,rho,gamma0,a0,lambda_star,ratio,root_residual\n";
  for (const auto& r : reports)
    out << r.n << ',' << format_double(r.kappa) << ',' << format_double(r.rho) << ','
        << format_double(r.gamma0) << ',' << format_double(r.a0) << ','
        << format_double(r.lambda_star) << ',' << format_double(r.ratio) << ','
        << format_double(r.root_residual) << '\n';
}

inline void write_ratio_curves_csv(const std::vector<RatioCurvePoint>& points, std::ostream& out) {
  out << "n,rho,kappa,gamma0,ratio\n";
  for (const auto& pt : points)
    out << pt.n << ',' << format_double(pt.rho) << ',' << format_double(pt.kappa) << ','
        << format_double(pt.gamma0) << ',' << format_double(pt.ratio) << '\n';
}

}  // namespace diagopt::rates
