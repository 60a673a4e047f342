#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "diagopt/core.hpp"
#include "diagopt/csv.hpp"
#include "diagopt/random.hpp"

namespace diagopt {

// ---------------------------------------------------------------------------
// Quadratic family: f_i(x) = 1/2 x' A_i x + b_i' x with diagonal positive
// definite A_i, so the minimizer of the average solves a diagonal system.
// ---------------------------------------------------------------------------

struct QuadraticGenSpec {
  long n = 1;             // number of components
  long p = 2;             // dimension, must be even
  double eta = 0.0;       // spread of the diagonal entries (powers of ten)
  std::uint64_t seed = 0;
};

class QuadraticProblem final : public ComponentOracle {
 public:
  // diag_a and offsets are n x p: row i holds the diagonal of A_i and b_i.
  QuadraticProblem(Eigen::MatrixXd diag_a, Eigen::MatrixXd offsets)
      : a_(std::move(diag_a)), b_(std::move(offsets)) {
    if (a_.rows() < 1 || a_.cols() < 1) throw std::invalid_argument("QuadraticProblem: empty matrix");
    if (a_.rows() != b_.rows() || a_.cols() != b_.cols())
      throw std::invalid_argument("QuadraticProblem: diag_A and b shapes differ");
    if (!(a_.minCoeff() > 0.0))
      throw std::invalid_argument("QuadraticProblem: every diagonal entry must be positive");
    mean_diag_ = a_.colwise().mean().transpose();
    // Closed-form minimizer of the average: elementwise solve of the summed
    // diagonal system.
    x_star_ = -(b_.colwise().sum().transpose().array() / a_.colwise().sum().transpose().array()).matrix();
    const double residual = mean_gradient(x_star_).norm();
    if (!(residual <= 1e-10 * (1.0 + b_.norm())))
      throw std::runtime_error("QuadraticProblem: minimizer residual " + format_double(residual));
  }

  long components() const override { return a_.rows(); }
  long dimension() const override { return a_.cols(); }

  /// Per-component bounds: extremes over all diagonal entries.
  ConvexityConstants constants() const override {
    return ConvexityConstants(a_.minCoeff(), a_.maxCoeff());
  }

  /// Curvature bounds of the averaged Hessian. Looser problem-level label;
  /// individual components can fall outside these.
  ConvexityConstants mean_constants() const {
    return ConvexityConstants(mean_diag_.minCoeff(), mean_diag_.maxCoeff());
  }

  /// Condition number of the averaged Hessian, the label experiments report.
  double kappa_f() const { return mean_diag_.maxCoeff() / mean_diag_.minCoeff(); }

  double component_value(long i, const Vector& x) const override {
    check_component(i);
    check_dimension(x);
    const auto ai = a_.row(i).transpose().array();
    return 0.5 * (ai * x.array().square()).sum() + b_.row(i).dot(x);
  }

  Vector component_gradient(long i, const Vector& x) const override {
    check_component(i);
    check_dimension(x);
    return (a_.row(i).transpose().array() * x.array()).matrix() + b_.row(i).transpose();
  }

  const Vector& x_star() const { return x_star_; }
  const Eigen::MatrixXd& diag_entries() const { return a_; }
  const Eigen::MatrixXd& offsets() const { return b_; }

 private:
  Vector mean_gradient(const Vector& x) const {
    Vector acc = Vector::Zero(dimension());
    for (long i = 0; i < components(); ++i)
      acc += (a_.row(i).transpose().array() * x.array()).matrix() + b_.row(i).transpose();
    return acc / double(components());
  }

  Eigen::MatrixXd a_, b_;
  Vector mean_diag_;
  Vector x_star_;
};

/// Draws a quadratic instance deterministically from the spec. Diagonal
/// entries are powers of ten with uniformly random integer exponents: the
/// first p/2 coordinates use exponents 0..floor(eta), the last p/2 the
/// mirrored negative range, and b entries are uniform on [0,1]. eta = 0
/// degenerates to identity Hessians; larger eta widens the realized
/// condition number of the averaged Hessian (roughly 10 at eta = 1,
/// around 120 at eta = 2).
inline QuadraticProblem generate_quadratic(const QuadraticGenSpec& spec) {
  if (spec.n < 1) throw std::invalid_argument("generate_quadratic: n must be >= 1");
  if (spec.p < 2 || spec.p % 2 != 0) throw std::invalid_argument("generate_quadratic: p must be even and positive");
  if (!(spec.eta >= 0.0)) throw std::invalid_argument("generate_quadratic: eta must be >= 0");
  const long half = spec.p / 2;
  const std::uint64_t exponents = static_cast<std::uint64_t>(std::floor(spec.eta)) + 1;
  Rng rng(spec.seed);
  Eigen::MatrixXd a(spec.n, spec.p), b(spec.n, spec.p);
  for (long i = 0; i < spec.n; ++i)
    for (long j = 0; j < spec.p; ++j) {
      const double e = double(rng.below(exponents));
      a(i, j) = std::pow(10.0, j < half ? e : -e);
    }
  for (long i = 0; i < spec.n; ++i)
    for (long j = 0; j < spec.p; ++j) b(i, j) = rng.uniform01();
  return QuadraticProblem(std::move(a), std::move(b));
}

// ---------------------------------------------------------------------------
// Datasets and the regularized logistic loss.
// ---------------------------------------------------------------------------

enum class DatasetFormat { csv, libsvm };

inline const char* dataset_format_name(DatasetFormat f) {
  return f == DatasetFormat::csv ? "csv" : "libsvm";
}

inline DatasetFormat dataset_format_from_name(const std::string& name) {
  if (name == "csv") return DatasetFormat::csv;
  if (name == "libsvm") return DatasetFormat::libsvm;
  throw std::invalid_argument("unknown dataset format: " + name);
}

/// Raw label value -> {-1, +1}. An empty map requires labels already in
/// {-1, +1}.
using LabelMap = std::map<double, double>;

struct Dataset {
  Eigen::MatrixXd features;     // n x p
  std::vector<double> labels;   // entries in {-1, +1}
  DatasetFormat source = DatasetFormat::csv;

  long rows() const { return features.rows(); }
  long dim() const { return features.cols(); }
};

namespace detail {

inline double map_label(double raw, const LabelMap& map, const std::string& where) {
  if (!map.empty()) {
    auto it = map.find(raw);
    if (it == map.end()) throw std::runtime_error(where + ": unknown label " + format_double(raw));
    raw = it->second;
  }
  if (raw != 1.0 && raw != -1.0)
    throw std::runtime_error(where + ": label " + format_double(raw) + " is not in {-1,+1}");
  return raw;
}

}  // namespace detail

/// Parses a dataset file. CSV rows are `label,feat1,...,featp` with a fixed
/// width; LIBSVM rows are `label idx:val ...` with 1-based indices and
/// missing entries read as zero (the width is the largest index seen).
/// Malformed input is reported with its line number.
inline Dataset read_dataset(const std::string& path, DatasetFormat format,
                            const LabelMap& label_map = {}, bool csv_has_header = false) {
  std::ifstream in = open_input(path);
  std::vector<double> labels;
  std::vector<std::vector<double>> dense_rows;                        // csv
  std::vector<std::vector<std::pair<long, double>>> sparse_rows;     // libsvm
  long p = -1;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path + ":" + std::to_string(line_no);
    if (csv_has_header && format == DatasetFormat::csv && line_no == 1) continue;
    const std::string body = trim(line);
    if (body.empty()) continue;
    if (format == DatasetFormat::csv) {
      const auto fields = split(body, ',');
      if (fields.size() < 2) throw std::runtime_error(where + ": expected `label,feat1,...`");
      labels.push_back(detail::map_label(parse_double(trim(fields[0]), where), label_map, where));
      std::vector<double> row(fields.size() - 1);
      for (std::size_t j = 1; j < fields.size(); ++j) row[j - 1] = parse_double(trim(fields[j]), where);
      if (p < 0) p = static_cast<long>(row.size());
      if (static_cast<long>(row.size()) != p)
        throw std::runtime_error(where + ": row has " + std::to_string(row.size()) +
                                 " features, expected " + std::to_string(p));
      dense_rows.push_back(std::move(row));
    } else {
      std::istringstream is(body);
      std::string tok;
      if (!(is >> tok)) throw std::runtime_error(where + ": empty row");
      labels.push_back(detail::map_label(parse_double(tok, where), label_map, where));
      std::vector<std::pair<long, double>> row;
      while (is >> tok) {
        const auto colon = tok.find(':');
        if (colon == std::string::npos) throw std::runtime_error(where + ": expected idx:val, got '" + tok + "'");
        const long idx = static_cast<long>(parse_int(tok.substr(0, colon), where));
        if (idx < 1) throw std::runtime_error(where + ": feature index must be >= 1");
        row.emplace_back(idx, parse_double(tok.substr(colon + 1), where));
        p = std::max(p, idx);
      }
      sparse_rows.push_back(std::move(row));
    }
  }
  Dataset data;
  data.source = format;
  data.labels = std::move(labels);
  const long n = static_cast<long>(data.labels.size());
  if (p < 0) p = 0;
  data.features = Eigen::MatrixXd::Zero(n, p);
  if (format == DatasetFormat::csv) {
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < p; ++j) data.features(i, j) = dense_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  } else {
    for (long i = 0; i < n; ++i)
      for (const auto& [idx, val] : sparse_rows[static_cast<std::size_t>(i)]) data.features(i, idx - 1) = val;
  }
  return data;
}

/// f_i(x) = log(1 + exp(-l_i x'u_i)) + (lambda/2)||x||^2 over rows scaled so
/// the largest squared row norm is one. Every component is lambda-strongly
/// convex with (lambda + 1/4)-Lipschitz gradients.
class LogisticProblem final : public ComponentOracle {
 public:
  LogisticProblem(Eigen::MatrixXd features, std::vector<double> labels, double lambda)
      : u_(std::move(features)), labels_(std::move(labels)), lambda_(lambda) {
    if (u_.rows() < 1) throw std::invalid_argument("LogisticProblem: empty dataset");
    if (u_.rows() != static_cast<long>(labels_.size()))
      throw std::invalid_argument("LogisticProblem: feature/label count mismatch");
    if (!(lambda_ > 0.0)) throw std::invalid_argument("LogisticProblem: lambda must be positive");
    for (double l : labels_)
      if (l != 1.0 && l != -1.0) throw std::invalid_argument("LogisticProblem: labels must be -1 or +1");
    const double max_norm = u_.rowwise().norm().maxCoeff();
    if (!(max_norm > 0.0)) throw std::invalid_argument("LogisticProblem: feature matrix is zero");
    u_ /= max_norm;  // now max_i ||u_i||^2 = 1
  }

  long components() const override { return u_.rows(); }
  long dimension() const override { return u_.cols(); }
  ConvexityConstants constants() const override { return ConvexityConstants(lambda_, lambda_ + 0.25); }
  double lambda() const { return lambda_; }
  const Eigen::MatrixXd& features() const { return u_; }
  const std::vector<double>& labels() const { return labels_; }

  double component_value(long i, const Vector& x) const override {
    check_component(i);
    check_dimension(x);
    const double t = labels_[static_cast<std::size_t>(i)] * u_.row(i).dot(x);
    return softplus(-t) + 0.5 * lambda_ * x.squaredNorm();
  }

  Vector component_gradient(long i, const Vector& x) const override {
    check_component(i);
    check_dimension(x);
    const double l = labels_[static_cast<std::size_t>(i)];
    const double t = l * u_.row(i).dot(x);
    return (-l * sigmoid(-t)) * u_.row(i).transpose() + lambda_ * x;
  }

 private:
  // log(1 + exp(z)) without overflow.
  static double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
  // 1 / (1 + exp(-z)) without overflow.
  static double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  }

  Eigen::MatrixXd u_;
  std::vector<double> labels_;
  double lambda_;
};

/// lambda = explicit value if given, else 1/sqrt(n).
inline LogisticProblem build_logistic(const Dataset& data, std::optional<double> lambda = std::nullopt) {
  if (data.rows() < 1) throw std::invalid_argument("build_logistic: empty dataset");
  const double l = lambda ? *lambda : 1.0 / std::sqrt(double(data.rows()));
  return LogisticProblem(data.features, data.labels, l);
}

}  // namespace diagopt
