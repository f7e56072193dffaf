#pragma once

// Posterior summaries of chain output and posterior-predictive class
// probabilities.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <Eigen/Dense>

#include "csps/dataset.hpp"
#include "csps/error.hpp"
#include "csps/model.hpp"
#include "csps/normal.hpp"
#include "csps/sampler.hpp"

namespace csps {

// c x (p+1) posterior activation frequencies; column 0 is identically 1.
using InclusionMatrix = Eigen::MatrixXd;
// (c+1)-vector of class probabilities, reference class first.
using ClassDistribution = Eigen::VectorXd;

inline InclusionMatrix inclusion_probabilities(std::span<const IndicatorMatrix> draws) {
  if (draws.empty()) throw ValidationError("inclusion_probabilities: no draws");
  InclusionMatrix sum = Eigen::MatrixXd::Zero(draws.front().classes(), draws.front().cols());
  for (const auto& m : draws) sum += m.as_double();
  return sum / static_cast<double>(draws.size());
}

inline InclusionMatrix inclusion_probabilities(const ChainOutput& output) {
  return inclusion_probabilities(std::span<const IndicatorMatrix>(output.m_draws));
}

inline CoefficientMatrix posterior_mean_beta(std::span<const CoefficientMatrix> draws) {
  if (draws.empty()) throw ValidationError("posterior_mean_beta: no draws");
  CoefficientMatrix sum = CoefficientMatrix::Zero(draws.front().rows(), draws.front().cols());
  for (const auto& b : draws) sum += b;
  return sum / static_cast<double>(draws.size());
}

inline CoefficientMatrix posterior_mean_beta(const ChainOutput& output) {
  return posterior_mean_beta(std::span<const CoefficientMatrix>(output.beta_draws));
}

// Entries with inclusion probability >= 0.5 (ties included).
inline IndicatorMatrix median_probability_model(const InclusionMatrix& mhat) {
  IndicatorMatrix m(static_cast<int>(mhat.rows()), static_cast<int>(mhat.cols()) - 1);
  for (Eigen::Index j = 0; j < mhat.rows(); ++j)
    for (Eigen::Index k = 1; k < mhat.cols(); ++k)
      m.set(static_cast<int>(j), static_cast<int>(k), mhat(j, k) >= 0.5);
  return m;
}

// E(beta | M = mstar, D) from a chain with the model held at mstar.
inline CoefficientMatrix conditional_beta_estimate(const Dataset& data,
                                                   const IndicatorMatrix& mstar,
                                                   ChainConfig config) {
  config.fixed_model = mstar;
  config.update_model = false;
  return posterior_mean_beta(run_chain(data, config));
}

// Class probabilities for latent means m (one per non-reference class)
// under independent unit-variance propensities:
//   P(0) = prod_j Phi(-m_j),
//   P(j) = int_0^inf phi(t - m_j) prod_{k != j} Phi(t - m_k) dt.
inline ClassDistribution class_probabilities_from_means(const Eigen::VectorXd& means) {
  const Eigen::Index c = means.size();
  ClassDistribution probs(c + 1);
  double p0 = 1.0;
  for (Eigen::Index j = 0; j < c; ++j) p0 *= normal_cdf(-means(j));
  probs(0) = p0;
  const double upper = std::max(means.maxCoeff(), 0.0) + 10.0;
  for (Eigen::Index j = 0; j < c; ++j) {
    auto integrand = [&](double t) {
      double v = normal_pdf(t - means(j));
      for (Eigen::Index k = 0; k < c && v > 0.0; ++k)
        if (k != j) v *= normal_cdf(t - means(k));
      return v;
    };
    probs(j + 1) =
        boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, upper, 20,
                                                                      1e-13);
  }
  return probs;
}

inline ClassDistribution class_probabilities(const CoefficientMatrix& beta,
                                             const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != beta.cols())
    throw ValidationError("class_probabilities: predictor vector length mismatch");
  return class_probabilities_from_means(beta * x);
}

// Model-averaged predictive distribution: the mean of per-draw class
// probabilities.
inline ClassDistribution predictive_distribution(std::span<const CoefficientMatrix> draws,
                                                 const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (draws.empty()) throw ValidationError("predictive_distribution: no draws");
  ClassDistribution sum = ClassDistribution::Zero(draws.front().rows() + 1);
  for (const auto& b : draws) sum += class_probabilities(b, x);
  return sum / static_cast<double>(draws.size());
}

inline ClassDistribution predictive_distribution(const ChainOutput& output,
                                                 const Eigen::Ref<const Eigen::VectorXd>& x) {
  return predictive_distribution(std::span<const CoefficientMatrix>(output.beta_draws), x);
}

inline int modal_class(const ClassDistribution& probs) {
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  return static_cast<int>(best);
}

inline double average_squared_error(const CoefficientMatrix& estimate,
                                    const CoefficientMatrix& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw ValidationError("average_squared_error: shape mismatch");
  return (estimate - truth).squaredNorm() / static_cast<double>(truth.size());
}

// Concatenates several chains' draws (in chain order) for pooled summaries.
inline ChainOutput pool_chains(std::span<const ChainOutput> chains) {
  ChainOutput pooled;
  for (const auto& ch : chains) {
    pooled.m_draws.insert(pooled.m_draws.end(), ch.m_draws.begin(), ch.m_draws.end());
    pooled.q_draws.insert(pooled.q_draws.end(), ch.q_draws.begin(), ch.q_draws.end());
    pooled.beta_draws.insert(pooled.beta_draws.end(), ch.beta_draws.begin(), ch.beta_draws.end());
    if (pooled.accept_counts.empty()) {
      pooled.accept_counts = ch.accept_counts;
      pooled.proposal_counts = ch.proposal_counts;
    } else {
      for (std::size_t j = 0; j < ch.accept_counts.size(); ++j) {
        pooled.accept_counts[j] += ch.accept_counts[j];
        pooled.proposal_counts[j] += ch.proposal_counts[j];
      }
    }
    pooled.q_accept += ch.q_accept;
    pooled.q_proposals += ch.q_proposals;
    pooled.variance_floor_hits += ch.variance_floor_hits;
  }
  return pooled;
}

}  // namespace csps
