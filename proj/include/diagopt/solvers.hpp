#pragma once

#include <chrono>
#include <climits>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "diagopt/core.hpp"
#include "diagopt/random.hpp"

namespace diagopt {

enum class Method { gd, sgd, igd, iag, sag, finito, diag };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::gd: return "gd";
    case Method::sgd: return "sgd";
    case Method::igd: return "igd";
    case Method::iag: return "iag";
    case Method::sag: return "sag";
    case Method::finito: return "finito";
    case Method::diag: return "diag";
  }
  return "?";
}

inline Method method_from_name(const std::string& name) {
  for (Method m : {Method::gd, Method::sgd, Method::igd, Method::iag, Method::sag, Method::finito, Method::diag})
    if (name == method_name(m)) return m;
  throw std::invalid_argument("unknown method: " + name);
}

struct StepsizePolicy {
  enum class Kind { paper_default, explicit_value, diminishing };
  Kind kind = Kind::paper_default;
  double value = 0.0;  // explicit eps, or the numerator c of c/k

  static StepsizePolicy paper_default() { return {}; }
  static StepsizePolicy explicit_value(double eps) { return {Kind::explicit_value, eps}; }
  static StepsizePolicy diminishing(double c) { return {Kind::diminishing, c}; }
};

struct ResolvedStepsize {
  double eps0 = 0.0;
  bool diminishing = false;
  double at(long long k) const { return diminishing ? eps0 / double(k) : eps0; }
};

/// Default stepsizes: 2/(mu+L) for GD and DIAG, 2/(nL) for IAG, 1/(16L) for
/// SAG, 1/(2mu) for Finito, and the diminishing 2/(mu+L)/k for SGD and IGD.
inline ResolvedStepsize resolve_stepsize(Method method, const StepsizePolicy& policy,
                                         const ConvexityConstants& c, long n) {
  switch (policy.kind) {
    case StepsizePolicy::Kind::explicit_value:
      if (!(policy.value > 0.0)) throw std::invalid_argument("stepsize must be positive");
      return {policy.value, false};
    case StepsizePolicy::Kind::diminishing:
      if (!(policy.value > 0.0)) throw std::invalid_argument("stepsize must be positive");
      return {policy.value, true};
    case StepsizePolicy::Kind::paper_default: break;
  }
  switch (method) {
    case Method::gd:
    case Method::diag: return {2.0 / (c.mu + c.L), false};
    case Method::iag: return {2.0 / (double(n) * c.L), false};
    case Method::sag: return {1.0 / (16.0 * c.L), false};
    case Method::finito: return {1.0 / (2.0 * c.mu), false};
    case Method::sgd:
    case Method::igd: return {2.0 / (c.mu + c.L), true};
  }
  throw std::logic_error("unreachable");
}

struct SolverConfig {
  Method method = Method::gd;
  StepsizePolicy stepsize{};
  long batch = 1;                  // minibatch size (sgd only)
  long group = 1;                  // components averaged together; must divide n
  long long max_grad_evals = -1;   // < 0: unlimited
  double target_rel_err = 0.0;     // <= 0: run to the budget
  std::uint64_t seed = 0;
  long refresh_period = 0;         // exact sum recomputation cadence; 0 means n
  long max_records = 10000;        // dense records before pass-boundary thinning
};

enum class TerminalStatus { converged, budget_exhausted, diverged };

inline const char* status_name(TerminalStatus s) {
  switch (s) {
    case TerminalStatus::converged: return "converged";
    case TerminalStatus::budget_exhausted: return "budget_exhausted";
    case TerminalStatus::diverged: return "diverged";
  }
  return "?";
}

struct TraceRecord {
  long long k = 0;
  long long grad_evals = 0;
  double rel_err = 0.0;
  double obj_gap = 0.0;
  long long wall_ns = 0;
};

struct Trace {
  std::vector<TraceRecord> records;
  TerminalStatus status = TerminalStatus::budget_exhausted;
  long long grad_evals_to_target = -1;  // set when status == converged

  double final_rel_err() const { return records.empty() ? 1.0 : records.back().rel_err; }
  long long final_grad_evals() const { return records.empty() ? 0 : records.back().grad_evals; }
};

// ---------------------------------------------------------------------------
// Memory shared by the aggregated methods: per-component iterate copies with
// their gradients, plus tracked sums of both.
// ---------------------------------------------------------------------------

/// Stored copies y_i of the iterate at each component's last update, together
/// with grad f_i(y_i). The two arrays are always written in the same motion,
/// so grads[i] is exactly the gradient at y[i].
struct GradientTable {
  std::vector<Vector> y;
  std::vector<Vector> grads;

  long size() const { return static_cast<long>(y.size()); }

  /// Fills every slot at x0; costs n gradient evaluations.
  void init(const ComponentOracle& oracle, const Vector& x0) {
    const long n = oracle.components();
    y.assign(static_cast<std::size_t>(n), x0);
    grads.resize(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) grads[static_cast<std::size_t>(i)] = oracle.component_gradient(i, x0);
  }
};

/// Tracked sums v = sum_i y_i and g = sum_i grad f_i(y_i), updated in O(p)
/// per replacement. The one-line updates are exact in real arithmetic but
/// accumulate round-off, so both sums are recomputed from the table every
/// refresh_period replacements (one O(np) pass per cycle keeps the
/// amortized per-step cost at O(p)).
struct RunningSums {
  Vector v;
  Vector g;
  long refresh_period = 1;
  long long replacements = 0;

  void reset(const GradientTable& table, long refresh) {
    refresh_period = refresh > 0 ? refresh : table.size();
    replacements = 0;
    recompute(table);
  }

  void recompute(const GradientTable& table) {
    v = Vector::Zero(table.y[0].size());
    g = Vector::Zero(table.y[0].size());
    for (const auto& yi : table.y) v += yi;
    for (const auto& gi : table.grads) g += gi;
  }

  /// Installs (x_new, grad_new) in slot i and folds the difference into the
  /// sums.
  void replace(GradientTable& table, long i, const Vector& x_new, Vector grad_new) {
    const auto idx = static_cast<std::size_t>(i);
    v = x_new - table.y[idx] + v;
    g = grad_new - table.grads[idx] + g;
    table.y[idx] = x_new;
    table.grads[idx] = std::move(grad_new);
    if (++replacements % refresh_period == 0) recompute(table);
  }
};

/// Table plus sums, with the per-method produce/update split: produce reads
/// only the sums, update evaluates the one gradient the step is charged.
struct IncrementalMemory {
  GradientTable table;
  RunningSums sums;

  void init(const ComponentOracle& oracle, const Vector& x0, long refresh_period = 0) {
    table.init(oracle, x0);
    sums.reset(table, refresh_period);
  }

  long n() const { return table.size(); }

  /// Aggregated-gradient step base: x - (eps/n) g.
  Vector produce_from(const Vector& x, double eps) const {
    return x - (eps / double(n())) * sums.g;
  }

  /// Double-aggregation step base: (1/n) v - (eps/n) g, averaging the stored
  /// iterates as well as the stored gradients.
  Vector produce_from_average(double eps) const {
    return sums.v / double(n()) - (eps / double(n())) * sums.g;
  }

  void update(const ComponentOracle& oracle, long i, const Vector& x_new) {
    sums.replace(table, i, x_new, oracle.component_gradient(i, x_new));
  }
};

// ---------------------------------------------------------------------------
// Single steps. run() below drives the same machinery with stop checks
// between the produce and update phases.
// ---------------------------------------------------------------------------

/// x - eps * (1/n) sum_i grad f_i(x); costs n gradient evaluations.
inline Vector gd_step(const ComponentOracle& oracle, const Vector& x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("gd_step: eps must be positive");
  return x - eps * full_gradient(oracle, x);
}

/// x - (eps_k/b) sum_{i in batch} grad f_i(x); costs b gradient evaluations.
inline Vector sgd_step(const ComponentOracle& oracle, const Vector& x, double eps_k,
                       const std::vector<long>& batch) {
  if (batch.empty()) throw std::invalid_argument("sgd_step: batch must not be empty");
  Vector acc = Vector::Zero(oracle.dimension());
  for (long i : batch) acc += oracle.component_gradient(i, x);
  return x - (eps_k / double(batch.size())) * acc;
}

/// Aggregated-gradient step: move along the stored-gradient average, then
/// refresh slot i_k at the new iterate. One gradient evaluation.
inline Vector iag_step(IncrementalMemory& memory, const ComponentOracle& oracle, const Vector& x,
                       double eps, long i_k) {
  Vector next = memory.produce_from(x, eps);
  memory.update(oracle, i_k, next);
  return next;
}

/// Same machinery as iag_step; the caller draws i_k uniformly at random.
inline Vector sag_step(IncrementalMemory& memory, const ComponentOracle& oracle, const Vector& x,
                       double eps, long i_k) {
  return iag_step(memory, oracle, x, eps, i_k);
}

/// Double incremental aggregated step: average the stored iterates and the
/// stored gradients, then refresh slot i_k at the new iterate. One gradient
/// evaluation.
inline Vector diag_step(IncrementalMemory& memory, const ComponentOracle& oracle, double eps,
                        long i_k) {
  Vector next = memory.produce_from_average(eps);
  memory.update(oracle, i_k, next);
  return next;
}

/// Same machinery as diag_step with a random i_k (cyclic aggregation run in
/// its stochastic flavor).
inline Vector finito_step(IncrementalMemory& memory, const ComponentOracle& oracle, double eps,
                          long i_k) {
  return diag_step(memory, oracle, eps, i_k);
}

// ---------------------------------------------------------------------------
// Component grouping: trade memory for per-step gradient work.
// ---------------------------------------------------------------------------

/// View presenting n/m components, each the average of m consecutive
/// originals. Averages of functions satisfying the (mu, L) bounds satisfy
/// them too, so the constants carry over. A grouped gradient call fans out
/// to m underlying calls; metering the base oracle therefore charges m.
class GroupedOracle final : public ComponentOracle {
 public:
  GroupedOracle(const ComponentOracle& base, long m) : base_(&base), m_(m) {
    if (m < 1 || base.components() % m != 0)
      throw std::invalid_argument("group_components: group size " + std::to_string(m) +
                                  " does not divide n = " + std::to_string(base.components()));
  }

  long components() const override { return base_->components() / m_; }
  long dimension() const override { return base_->dimension(); }
  ConvexityConstants constants() const override { return base_->constants(); }

  double component_value(long j, const Vector& x) const override {
    check_component(j);
    double acc = 0.0;
    for (long i = j * m_; i < (j + 1) * m_; ++i) acc += base_->component_value(i, x);
    return acc / double(m_);
  }

  Vector component_gradient(long j, const Vector& x) const override {
    check_component(j);
    Vector acc = Vector::Zero(dimension());
    for (long i = j * m_; i < (j + 1) * m_; ++i) acc += base_->component_gradient(i, x);
    return acc / double(m_);
  }

 private:
  const ComponentOracle* base_;
  long m_;
};

inline GroupedOracle group_components(const ComponentOracle& oracle, long m) {
  return GroupedOracle(oracle, m);
}

// ---------------------------------------------------------------------------
// The driver.
// ---------------------------------------------------------------------------

using IterateObserver = std::function<void(long long k, const Vector& x)>;

/// Runs one method until the relative error against x_star reaches the
/// target or the gradient budget runs out. Deterministic given (config,
/// seed, problem) up to the wall-clock column.
///
/// Accounting: the trace row for iterate k carries the gradient evaluations
/// spent to *produce* x^k -- n*k for GD, b*k for minibatch SGD, and n+k-1
/// for the table-based methods, whose n-gradient table fill is charged to
/// the first step and whose per-step gradient is charged only after the
/// stop check on the new iterate.
inline Trace run(const ComponentOracle& problem, const SolverConfig& config, const Vector& x0,
                 const Vector& x_star, const IterateObserver& observer = {}) {
  if (config.max_grad_evals < 0 && !(config.target_rel_err > 0.0))
    throw std::invalid_argument("run: need a positive target_rel_err or a gradient budget");
  if (config.batch < 1) throw std::invalid_argument("run: batch must be >= 1");
  if (x0.size() != problem.dimension() || x_star.size() != problem.dimension())
    throw std::invalid_argument("run: x0/x_star dimension mismatch");

  MeteredOracle metered(problem);
  std::optional<GroupedOracle> grouped;
  if (config.group > 1) grouped.emplace(metered, config.group);
  const ComponentOracle& oracle = grouped ? static_cast<const ComponentOracle&>(*grouped)
                                          : static_cast<const ComponentOracle&>(metered);

  const long n = oracle.components();
  if (config.batch > n) throw std::invalid_argument("run: batch larger than component count");
  const ResolvedStepsize eps = resolve_stepsize(config.method, config.stepsize, oracle.constants(), n);
  const bool table_based = config.method == Method::iag || config.method == Method::sag ||
                           config.method == Method::diag || config.method == Method::finito;
  const bool random_index = config.method == Method::sag || config.method == Method::finito;
  const bool averages_iterates = config.method == Method::diag || config.method == Method::finito;

  Rng rng(config.seed);
  Vector x = x0;
  const double e0 = (x0 - x_star).norm();
  const double f_star = objective_value(problem, x_star);
  const auto budget = config.max_grad_evals < 0 ? LLONG_MAX : config.max_grad_evals;

  Trace trace;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rel_of = [&](const Vector& z) {
    const double d = (z - x_star).norm();
    return e0 > 0.0 ? d / e0 : d;
  };
  const auto record = [&](long long k, const Vector& z, double rel) {
    const auto wall = std::chrono::duration_cast<std::chrono::nanoseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    trace.records.push_back({k, metered.counter().gradients(), rel, objective_value(problem, z) - f_star, wall});
  };
  const auto dense_until = config.max_records > 0 ? config.max_records : LONG_MAX;
  const auto should_record = [&](long long k) { return k <= dense_until || (k - 1) % n == 0; };

  double rel = rel_of(x);
  record(0, x, rel);
  if (observer) observer(0, x);
  if (config.target_rel_err > 0.0 && rel <= config.target_rel_err) {
    trace.status = TerminalStatus::converged;
    trace.grad_evals_to_target = 0;
    return trace;
  }

  IncrementalMemory memory;
  long long last_k = 0;
  for (long long k = 1;; ++k) {
    // Gate on the cost of producing x^k.
    long long need = 1;
    if (config.method == Method::gd) need = n;
    else if (config.method == Method::sgd) need = config.batch;
    else if (table_based) need = k == 1 ? n : 0;
    if (metered.counter().gradients() + need > budget) {
      trace.status = TerminalStatus::budget_exhausted;
      break;
    }

    // Produce x^k.
    switch (config.method) {
      case Method::gd:
        x = x - eps.at(k) * full_gradient(oracle, x);
        break;
      case Method::sgd:
        x = sgd_step(oracle, x, eps.at(k), rng.distinct(config.batch, n));
        break;
      case Method::igd: {
        const long i = static_cast<long>((k - 1) % n);
        x = x - eps.at(k) * oracle.component_gradient(i, x);
        break;
      }
      default: {
        if (k == 1) memory.init(oracle, x, config.refresh_period);
        x = averages_iterates ? memory.produce_from_average(eps.at(k))
                              : memory.produce_from(x, eps.at(k));
        break;
      }
    }

    // Stop checks on the produced iterate, before any further gradient is
    // charged.
    last_k = k;
    rel = rel_of(x);
    bool terminal = false;
    if (!x.allFinite() || rel > 1e12) {
      trace.status = TerminalStatus::diverged;
      terminal = true;
    } else if (config.target_rel_err > 0.0 && rel <= config.target_rel_err) {
      trace.status = TerminalStatus::converged;
      terminal = true;
    }
    if (terminal || should_record(k)) record(k, x, rel);
    if (observer) observer(k, x);
    if (terminal) {
      if (trace.status == TerminalStatus::converged)
        trace.grad_evals_to_target = trace.records.back().grad_evals;
      break;
    }

    // Table refresh at the new iterate: the one gradient this step pays for.
    if (table_based) {
      if (metered.counter().gradients() + 1 > budget) {
        trace.status = TerminalStatus::budget_exhausted;
        break;
      }
      const long i = random_index ? static_cast<long>(rng.below(static_cast<std::uint64_t>(n)))
                                  : static_cast<long>((k - 1) % n);
      memory.update(oracle, i, x);
    }
  }
  // A thinned-out run may end between recorded rows; always keep the final
  // iterate.
  if (last_k > 0 && trace.records.back().k != last_k) record(last_k, x, rel);
  return trace;
}

}  // namespace diagopt
