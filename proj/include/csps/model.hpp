#pragma once

// Domain types and the hierarchical prior over (beta, M, q).
//
// Conventions used throughout the library:
//   * c non-reference classes, labelled 1..c; class 0 is the reference.
//     Row j of every c x (p+1) matrix (0-based) belongs to class j+1.
//   * Column 0 is the intercept; columns 1..p are predictors.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csps/error.hpp"
#include "csps/normal.hpp"

namespace csps {

using CoefficientMatrix = Eigen::MatrixXd;

struct ProblemShape {
  int n = 0;  // units
  int c = 1;  // non-reference classes
  int p = 1;  // predictors (design has p+1 columns)

  void validate() const {
    if (n < 0) throw ValidationError("unit count must be non-negative");
    if (c < 1) throw ValidationError("need at least two classes (c >= 1)");
    if (p < 1) throw ValidationError("need at least one predictor (p >= 1)");
  }
};

// Intercept prior center that makes Y uniform over {0..c} when every
// class propensity sits at it: Phi^{-1}(1 - (c+1)^{-1/c}).
inline double default_intercept_mean(int c) {
  if (c < 1) throw ValidationError("default_intercept_mean: c must be >= 1");
  const double tail = std::pow(static_cast<double>(c + 1), -1.0 / c);
  return normal_quantile(1.0 - tail);
}

struct Hyperparameters {
  Eigen::VectorXd mu;  // length p+1
  double tau2 = 4.0;
  double rho = 0.0;
  double gamma1 = 5.0;
  double gamma2 = 15.0;

  static Hyperparameters defaults(int c, int p) {
    Hyperparameters hp;
    hp.mu = Eigen::VectorXd::Zero(p + 1);
    hp.mu(0) = default_intercept_mean(c);
    return hp;
  }

  double prior_mean_q() const { return gamma1 / (gamma1 + gamma2); }

  void validate(int p) const {
    if (mu.size() != p + 1) throw ValidationError("mu must have length p+1");
    if (!(tau2 > 0.0)) throw ValidationError("tau2 must be positive");
    if (!(rho >= 0.0 && rho <= 1.0)) throw ValidationError("rho must lie in [0, 1]");
    if (!(gamma1 > 0.0 && gamma2 > 0.0)) throw ValidationError("gamma1, gamma2 must be positive");
  }
};

// Binary c x (p+1) activity pattern. The intercept column is fixed at one
// and cannot be changed through this interface.
class IndicatorMatrix {
 public:
  using Storage = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

  IndicatorMatrix() = default;

  // Intercepts-only (the "empty" model).
  IndicatorMatrix(int classes, int predictors)
      : entries_(Storage::Zero(classes, predictors + 1)) {
    if (classes < 1 || predictors < 0) throw ValidationError("IndicatorMatrix: bad shape");
    entries_.col(0).setOnes();
  }

  static IndicatorMatrix full(int classes, int predictors) {
    IndicatorMatrix m(classes, predictors);
    m.entries_.setOnes();
    return m;
  }

  // Accepts any integer matrix of 0/1 values whose first column is all ones.
  template <typename Derived>
  static IndicatorMatrix from_entries(const Eigen::MatrixBase<Derived>& values) {
    IndicatorMatrix m(static_cast<int>(values.rows()), static_cast<int>(values.cols()) - 1);
    for (Eigen::Index j = 0; j < values.rows(); ++j) {
      for (Eigen::Index k = 0; k < values.cols(); ++k) {
        const auto v = values(j, k);
        if (v != 0 && v != 1) throw ValidationError("indicator entries must be 0 or 1");
        if (k == 0 && v != 1) throw ValidationError("indicator intercept column must be all ones");
        m.entries_(j, k) = static_cast<std::uint8_t>(v);
      }
    }
    return m;
  }

  int classes() const { return static_cast<int>(entries_.rows()); }
  int predictors() const { return static_cast<int>(entries_.cols()) - 1; }
  int cols() const { return static_cast<int>(entries_.cols()); }

  bool operator()(int j, int k) const { return entries_(j, k) != 0; }

  void set(int j, int k, bool active) {
    if (k == 0) throw ValidationError("intercept indicators are fixed");
    entries_(j, k) = active ? 1 : 0;
  }
  void toggle(int j, int k) { set(j, k, !(*this)(j, k)); }

  // M_{j+}: active entries in row j, intercept included.
  int row_count(int j) const { return entries_.row(j).cast<int>().sum(); }
  // M_{+k}: active entries in column k.
  int column_count(int k) const { return entries_.col(k).cast<int>().sum(); }

  std::vector<int> active_columns(int j) const {
    std::vector<int> cols;
    for (int k = 0; k < this->cols(); ++k)
      if (entries_(j, k)) cols.push_back(k);
    return cols;
  }

  const Storage& entries() const { return entries_; }
  Eigen::MatrixXd as_double() const { return entries_.cast<double>(); }

  friend bool operator==(const IndicatorMatrix& a, const IndicatorMatrix& b) {
    return a.entries_.rows() == b.entries_.rows() && a.entries_.cols() == b.entries_.cols() &&
           a.entries_ == b.entries_;
  }

 private:
  Storage entries_;
};

struct PriorMoments {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd variance;
};

// Conditional prior moments of beta given M: mean mu_k M_jk, variance
// tau2 / M_{j+} on active entries and zero elsewhere.
inline PriorMoments prior_moments(const IndicatorMatrix& m, const Hyperparameters& hp) {
  const int c = m.classes();
  const int cols = m.cols();
  if (hp.mu.size() != cols) throw ValidationError("prior_moments: mu length mismatch");
  PriorMoments out{Eigen::MatrixXd::Zero(c, cols), Eigen::MatrixXd::Zero(c, cols)};
  for (int j = 0; j < c; ++j) {
    const double var = hp.tau2 / m.row_count(j);
    for (int k = 0; k < cols; ++k) {
      if (!m(j, k)) continue;
      out.mean(j, k) = hp.mu(k);
      out.variance(j, k) = var;
    }
  }
  return out;
}

// Log prior weight of one predictor column holding `active` ones out of c.
inline double log_column_prior(int active, int c, double q, double rho) {
  if (rho >= 1.0) {
    if (active == 0) return std::log1p(-q);
    if (active == c) return std::log(q);
    return -kInf;
  }
  const double s = std::sqrt(rho);
  const double p0 = (1.0 - s) * q;
  const double p1 = p0 + s;
  const int inactive = c - active;
  const double t0 = std::log1p(-q) + active * std::log(p0) + inactive * std::log1p(-p0);
  const double t1 = std::log(q) + active * std::log(p1) + inactive * std::log1p(-p1);
  const double hi = std::max(t0, t1);
  return hi + std::log(std::exp(t0 - hi) + std::exp(t1 - hi));
}

// log pi(M | q, rho): product of the column mixtures over predictors 1..p.
inline double log_prior_indicator(const IndicatorMatrix& m, double q, double rho) {
  double total = 0.0;
  for (int k = 1; k < m.cols(); ++k) {
    total += log_column_prior(m.column_count(k), m.classes(), q, rho);
    if (total == -kInf) break;
  }
  return total;
}

// Two-stage draw: per column pick the "on" component with probability q,
// then fill the column with i.i.d. Bernoulli(p1) or Bernoulli(p0) entries.
inline IndicatorMatrix sample_indicator_prior(int c, int p, double q, double rho, Rng& rng) {
  IndicatorMatrix m(c, p);
  const double s = std::sqrt(rho);
  const double p0 = (1.0 - s) * q;
  const double p1 = p0 + s;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int k = 1; k <= p; ++k) {
    const double prob = unif(rng) < q ? p1 : p0;
    for (int j = 0; j < c; ++j) m.set(j, k, unif(rng) < prob);
  }
  return m;
}

}  // namespace csps
