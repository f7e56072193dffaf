#pragma once

// Dataset ingestion, predictor standardization, radial-basis features,
// synthetic benchmark generators and cross-validation splitters.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "csps/csv.hpp"
#include "csps/dataset.hpp"
#include "csps/error.hpp"
#include "csps/model.hpp"
#include "csps/normal.hpp"

namespace csps {

// Class names ordered for indexing: numerically when every label parses as
// a number, lexicographically otherwise.
inline std::vector<std::string> sorted_labels(const std::set<std::string>& labels) {
  std::vector<std::string> out(labels.begin(), labels.end());
  const bool numeric = std::all_of(out.begin(), out.end(),
                                   [](const std::string& s) { return parse_number(s).has_value(); });
  if (numeric) {
    std::stable_sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
      return *parse_number(a) < *parse_number(b);
    });
  }
  return out;
}

// Builds a dataset from predictor columns (no intercept) and raw labels. The
// reference class maps to 0 and the rest follow in sorted order. Without an
// explicit reference the first sorted label is used.
inline Dataset make_dataset(const Eigen::MatrixXd& predictors, const std::vector<std::string>& raw,
                            std::vector<std::string> predictor_names,
                            const std::optional<std::string>& reference = std::nullopt) {
  if (static_cast<Eigen::Index>(raw.size()) != predictors.rows())
    throw ValidationError("label count does not match predictor rows");
  std::set<std::string> distinct(raw.begin(), raw.end());
  if (distinct.size() < 2) throw ValidationError("data contain a single class; need at least two");
  std::vector<std::string> order = sorted_labels(distinct);
  if (reference) {
    auto it = std::find(order.begin(), order.end(), *reference);
    if (it == order.end())
      throw ValidationError("reference class '" + *reference + "' does not occur in the labels");
    std::rotate(order.begin(), it, it + 1);
  }
  std::map<std::string, int> index;
  for (std::size_t y = 0; y < order.size(); ++y) index[order[y]] = static_cast<int>(y);

  Dataset ds;
  ds.design.resize(predictors.rows(), predictors.cols() + 1);
  ds.design.col(0).setOnes();
  ds.design.rightCols(predictors.cols()) = predictors;
  ds.labels.reserve(raw.size());
  for (const auto& s : raw) ds.labels.push_back(index.at(s));
  ds.class_names = std::move(order);
  ds.predictor_names = std::move(predictor_names);
  return ds;
}

inline Dataset load_csv(const std::string& path, const std::string& label_column,
                        const std::optional<std::string>& reference_class = std::nullopt) {
  const CsvTable t = read_csv_file(path);
  const int label_col = t.column(label_column);
  if (label_col < 0) throw ValidationError(path + ": no label column named '" + label_column + "'");
  std::vector<std::string> names;
  std::vector<int> source_cols;
  for (int k = 0; k < static_cast<int>(t.header.size()); ++k) {
    if (k == label_col) continue;
    names.push_back(t.header[k]);
    source_cols.push_back(k);
  }
  if (names.empty()) throw ValidationError(path + ": no predictor columns");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(names.size()));
  std::vector<std::string> raw;
  raw.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row[label_col].empty())
      throw ValidationError(path + ": missing label at data row " + std::to_string(r + 1));
    raw.push_back(row[label_col]);
    for (std::size_t a = 0; a < source_cols.size(); ++a) {
      const auto v = parse_number(row[source_cols[a]]);
      if (!v || !std::isfinite(*v))
        throw ValidationError(path + ": missing or non-numeric value at data row " +
                              std::to_string(r + 1) + ", column '" + names[a] + "'");
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a)) = *v;
    }
  }
  return make_dataset(x, raw, names, reference_class);
}

inline void write_dataset_csv(std::ostream& os, const Dataset& ds,
                              const std::string& label_column = "label") {
  for (const auto& name : ds.predictor_names) os << name << ',';
  os << label_column << '\n';
  for (int i = 0; i < ds.n(); ++i) {
    for (int k = 1; k <= ds.p(); ++k) os << format_number(ds.design(i, k)) << ',';
    os << ds.class_names[ds.labels[i]] << '\n';
  }
}

// Per-column shift and scale for predictors 1..p.
struct Standardization {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;
};

inline Dataset apply_standardization(const Dataset& ds, const Standardization& s) {
  if (s.shift.size() != ds.p()) throw ValidationError("standardization has wrong column count");
  Dataset out = ds;
  for (int k = 1; k <= ds.p(); ++k)
    out.design.col(k) = (ds.design.col(k).array() - s.shift(k - 1)) / s.scale(k - 1);
  return out;
}

// Sample mean 0 and sample SD 1 (n - 1 divisor) on every predictor column.
inline std::pair<Dataset, Standardization> standardize(const Dataset& ds) {
  if (ds.n() < 2) throw ValidationError("standardize: need at least two rows");
  Standardization s{Eigen::VectorXd(ds.p()), Eigen::VectorXd(ds.p())};
  for (int k = 1; k <= ds.p(); ++k) {
    const auto col = ds.design.col(k).array();
    const double mean = col.mean();
    const double sd = std::sqrt((col - mean).square().sum() / (ds.n() - 1));
    if (!(sd > 0.0))
      throw ValidationError("standardize: predictor '" +
                            (k - 1 < static_cast<int>(ds.predictor_names.size())
                                 ? ds.predictor_names[k - 1]
                                 : std::to_string(k)) +
                            "' is constant");
    s.shift(k - 1) = mean;
    s.scale(k - 1) = sd;
  }
  return {apply_standardization(ds, s), s};
}

// Gaussian radial-basis features X_k = a_k + b_k exp(-|v - knot_k|^2 / (2 h^2)).
struct RbfConfig {
  Eigen::MatrixXd knots;  // K x d
  double bandwidth = 4.0;
  Eigen::VectorXd a;  // K
  Eigen::VectorXd b;  // K
};

inline Eigen::MatrixXd rbf_raw(const Eigen::MatrixXd& covariates, const Eigen::MatrixXd& knots,
                               double h) {
  if (knots.rows() == 0) throw ValidationError("rbf: no knots");
  if (!(h > 0.0)) throw ValidationError("rbf: bandwidth must be positive");
  if (knots.cols() != covariates.cols()) throw ValidationError("rbf: knot dimension mismatch");
  Eigen::MatrixXd raw(covariates.rows(), knots.rows());
  for (Eigen::Index i = 0; i < covariates.rows(); ++i)
    for (Eigen::Index k = 0; k < knots.rows(); ++k)
      raw(i, k) = std::exp(-(covariates.row(i) - knots.row(k)).squaredNorm() / (2.0 * h * h));
  return raw;
}

// Chooses a_k, b_k so that every feature has mean 0 and SD 1 on the
// construction sample.
inline RbfConfig fit_rbf(const Eigen::MatrixXd& construction, const Eigen::MatrixXd& knots,
                         double h) {
  for (Eigen::Index a = 0; a < knots.rows(); ++a)
    for (Eigen::Index b = a + 1; b < knots.rows(); ++b)
      if (knots.row(a) == knots.row(b))
        std::clog << "warning: duplicate RBF knots " << a << " and " << b
                  << " give identical features\n";
  const Eigen::MatrixXd raw = rbf_raw(construction, knots, h);
  if (raw.rows() < 2) throw ValidationError("rbf: need at least two construction rows");
  RbfConfig cfg{knots, h, Eigen::VectorXd(knots.rows()), Eigen::VectorXd(knots.rows())};
  for (Eigen::Index k = 0; k < raw.cols(); ++k) {
    const auto col = raw.col(k).array();
    const double mean = col.mean();
    const double sd = std::sqrt((col - mean).square().sum() / (raw.rows() - 1));
    if (!(sd > 1e-300) || !(sd > 1e-12 * std::max(1.0, std::abs(mean))))
      throw ValidationError("rbf: feature " + std::to_string(k + 1) + " has zero variance");
    cfg.b(k) = 1.0 / sd;
    cfg.a(k) = -mean / sd;
  }
  return cfg;
}

inline Eigen::MatrixXd rbf_features(const Eigen::MatrixXd& covariates, const RbfConfig& cfg) {
  Eigen::MatrixXd raw = rbf_raw(covariates, cfg.knots, cfg.bandwidth);
  for (Eigen::Index k = 0; k < raw.cols(); ++k)
    raw.col(k) = (cfg.a(k) + cfg.b(k) * raw.col(k).array()).matrix();
  return raw;
}

// `count` distinct rows of `covariates` drawn without replacement.
inline Eigen::MatrixXd select_knots(const Eigen::MatrixXd& covariates, int count, Rng& rng) {
  if (count < 1 || count > covariates.rows())
    throw ValidationError("select_knots: knot count must be in 1..n");
  std::vector<int> idx(static_cast<std::size_t>(covariates.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  Eigen::MatrixXd knots(count, covariates.cols());
  for (int k = 0; k < count; ++k) knots.row(k) = covariates.row(idx[k]);
  return knots;
}

// Labels from the latent rule: Z ~ N(beta x, I_c); the largest positive
// coordinate wins, all-negative gives class 0.
inline std::vector<int> generate_labels(const Eigen::MatrixXd& design, const CoefficientMatrix& beta,
                                        Rng& rng) {
  if (design.cols() != beta.cols()) throw ValidationError("generate_labels: shape mismatch");
  std::vector<int> labels(static_cast<std::size_t>(design.rows()));
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    const Eigen::VectorXd mean = beta * design.row(i).transpose();
    int best = 0;
    double top = 0.0;
    for (Eigen::Index j = 0; j < mean.size(); ++j) {
      const double z = mean(j) + std_normal(rng);
      if (z > top) {
        top = z;
        best = static_cast<int>(j) + 1;
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

inline std::vector<int> generate_labels(const Eigen::MatrixXd& design, const CoefficientMatrix& beta,
                                        std::uint64_t seed) {
  Rng rng(seed);
  return generate_labels(design, beta, rng);
}

// Covariance of the 15 synthetic predictors: an equicorrelated (0.5) block
// X1..X6, X7..X12 with X_j = 0.8 X_{j-6} + noise, and independent X13..X15.
inline Eigen::MatrixXd scenario_covariance() {
  Eigen::MatrixXd first = Eigen::MatrixXd::Constant(6, 6, 0.5);
  first.diagonal().setOnes();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(15, 15);
  cov.topLeftCorner(6, 6) = first;
  cov.block(6, 6, 6, 6) = 0.64 * first + 0.36 * Eigen::MatrixXd::Identity(6, 6);
  cov.block(0, 6, 6, 6) = 0.8 * first;
  cov.block(6, 0, 6, 6) = 0.8 * first;
  return cov;
}

inline Eigen::MatrixXd sample_scenario_predictors(int n, Rng& rng) {
  const Eigen::MatrixXd factor = scenario_covariance().llt().matrixL();
  Eigen::MatrixXd x(n, 15);
  Eigen::VectorXd e(15);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 15; ++k) e(k) = std_normal(rng);
    x.row(i) = (factor * e).transpose();
  }
  return x;
}

// Scenario 1: two active predictors per class, (beta_{j,j}, beta_{j,j+1}) =
// (0.75, 0.5).
inline CoefficientMatrix scenario1_beta() {
  CoefficientMatrix beta = CoefficientMatrix::Zero(5, 16);
  beta.col(0).setConstant(default_intercept_mean(5));
  for (int j = 1; j <= 5; ++j) {
    beta(j - 1, j) = 0.75;
    beta(j - 1, j + 1) = 0.5;
  }
  return beta;
}

// Scenario 2: |beta| = 0.75 on X1..X3, 0.5 on X4..X6, 0 beyond. Row j flips
// the sign of column b+1 for every set bit b of j.
inline CoefficientMatrix scenario2_beta() {
  CoefficientMatrix beta = CoefficientMatrix::Zero(5, 16);
  beta.col(0).setConstant(default_intercept_mean(5));
  for (int j = 1; j <= 5; ++j) {
    for (int k = 1; k <= 6; ++k) {
      const double magnitude = k <= 3 ? 0.75 : 0.5;
      const bool flip = k - 1 < 31 && ((j >> (k - 1)) & 1) != 0;
      beta(j - 1, k) = flip ? -magnitude : magnitude;
    }
  }
  return beta;
}

struct SimulatedData {
  Dataset data;
  CoefficientMatrix true_beta;
};

inline SimulatedData simulate_scenario(int scenario, std::uint64_t seed, int n = 250) {
  CoefficientMatrix beta;
  if (scenario == 1) {
    beta = scenario1_beta();
  } else if (scenario == 2) {
    beta = scenario2_beta();
  } else {
    throw ValidationError("unknown scenario " + std::to_string(scenario) + " (expected 1 or 2)");
  }
  Rng rng(seed);
  SimulatedData sim;
  sim.data.design.resize(n, 16);
  sim.data.design.col(0).setOnes();
  sim.data.design.rightCols(15) = sample_scenario_predictors(n, rng);
  sim.data.labels = generate_labels(sim.data.design, beta, rng);
  sim.data.class_names = numbered_classes(5);
  sim.data.predictor_names = numbered_predictors(15);
  sim.true_beta = std::move(beta);
  return sim;
}

inline SimulatedData simulate_scenario1(std::uint64_t seed) { return simulate_scenario(1, seed); }
inline SimulatedData simulate_scenario2(std::uint64_t seed) { return simulate_scenario(2, seed); }

struct Split {
  std::vector<int> train;
  std::vector<int> test;
};

namespace detail {

inline std::vector<Split> splits_from_order(const std::vector<int>& order, int k) {
  const int n = static_cast<int>(order.size());
  std::vector<Split> out(static_cast<std::size_t>(k));
  int start = 0;
  for (int f = 0; f < k; ++f) {
    const int size = n / k + (f < n % k ? 1 : 0);
    std::vector<int> test(order.begin() + start, order.begin() + start + size);
    std::sort(test.begin(), test.end());
    std::vector<bool> held(static_cast<std::size_t>(n), false);
    for (int i : test) held[static_cast<std::size_t>(i)] = true;
    for (int i = 0; i < n; ++i)
      if (!held[static_cast<std::size_t>(i)]) out[f].train.push_back(i);
    out[f].test = std::move(test);
    start += size;
  }
  return out;
}

}  // namespace detail

// k random folds of sizes differing by at most one.
inline std::vector<Split> kfold_splits(int n, int k, std::uint64_t seed) {
  if (k < 1 || k > n) throw ValidationError("kfold_splits: need 1 <= k <= n");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return detail::splits_from_order(order, k);
}

inline std::vector<Split> loocv_splits(int n) {
  if (n < 1) throw ValidationError("loocv_splits: need n >= 1");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  return detail::splits_from_order(order, n);
}

// Random split with round(n * fraction) training units.
inline Split train_test_split(int n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ValidationError("train_test_split: fraction must lie in (0, 1)");
  const int train_size = static_cast<int>(std::lround(n * fraction));
  if (train_size < 1 || train_size >= n)
    throw ValidationError("train_test_split: both parts must be non-empty");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  Split s;
  s.train.assign(order.begin(), order.begin() + train_size);
  s.test.assign(order.begin() + train_size, order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace csps
