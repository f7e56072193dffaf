#pragma once

// Marginalized Gaussian algebra for one class row of the latent regression
//
//   Z_{.j} | M ~ N_n( X_M mu_M, I_n + X_M V_M X_M' ),
//
// evaluated through the m x m coefficient posterior (Woodbury) so that no
// n x n matrix is ever formed.

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "csps/error.hpp"
#include "csps/model.hpp"

namespace csps {

// Design restricted to the active columns of one class row.
struct ActiveDesign {
  Eigen::MatrixXd columns;     // n x m
  Eigen::VectorXd prior_mean;  // m
  Eigen::VectorXd prior_var;   // m, every entry tau2 / m
  std::vector<int> column_index;

  int n() const { return static_cast<int>(columns.rows()); }
  int m() const { return static_cast<int>(columns.cols()); }

  static ActiveDesign for_row(const Eigen::MatrixXd& design, const IndicatorMatrix& ind, int j,
                              const Hyperparameters& hp) {
    ActiveDesign d;
    d.column_index = ind.active_columns(j);
    const int m = static_cast<int>(d.column_index.size());
    d.columns.resize(design.rows(), m);
    d.prior_mean.resize(m);
    d.prior_var = Eigen::VectorXd::Constant(m, hp.tau2 / m);
    for (int a = 0; a < m; ++a) {
      d.columns.col(a) = design.col(d.column_index[a]);
      d.prior_mean(a) = hp.mu(d.column_index[a]);
    }
    return d;
  }
};

// Conjugate posterior of the active coefficients given one latent column:
// precision V^{-1} + X'X, mean Vt (X'z + V^{-1} mu).
struct CoefficientPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::LLT<Eigen::MatrixXd> precision_factor;
  double log_det_V = 0.0;
  double log_det_Vtilde = 0.0;
};

// Builds the posterior from sufficient statistics (X'X, X'z).
inline CoefficientPosterior coefficient_posterior_from_stats(const Eigen::VectorXd& prior_mean,
                                                             const Eigen::VectorXd& prior_var,
                                                             const Eigen::MatrixXd& gram,
                                                             const Eigen::VectorXd& xtz) {
  const Eigen::Index m = prior_mean.size();
  CoefficientPosterior post;
  Eigen::MatrixXd precision = gram;
  precision.diagonal() += prior_var.cwiseInverse();
  post.precision_factor.compute(precision);
  if (post.precision_factor.info() != Eigen::Success)
    throw NumericalError("coefficient posterior precision is not positive definite");
  const Eigen::VectorXd rhs = xtz + prior_mean.cwiseQuotient(prior_var);
  post.mean = post.precision_factor.solve(rhs);
  post.covariance = post.precision_factor.solve(Eigen::MatrixXd::Identity(m, m));
  post.log_det_V = prior_var.array().log().sum();
  post.log_det_Vtilde =
      -2.0 * post.precision_factor.matrixLLT().diagonal().array().log().sum();
  return post;
}

inline CoefficientPosterior coefficient_posterior(const ActiveDesign& d,
                                                  const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (z.size() != d.n()) throw ValidationError("coefficient_posterior: latent length mismatch");
  const Eigen::MatrixXd gram = d.columns.transpose() * d.columns;
  const Eigen::VectorXd xtz = d.columns.transpose() * z;
  return coefficient_posterior_from_stats(d.prior_mean, d.prior_var, gram, xtz);
}

// Complete log density of N_n(z; X mu, I + X V X') given the posterior for
// (d, z) and z'z. Uses |I + XVX'| = |V| / |Vt| and
// (z - X mu)'(I + XVX')^{-1}(z - X mu) = z'z + mu'V^{-1}mu - mt'Vt^{-1}mt.
inline double log_marginal_from_posterior(const CoefficientPosterior& post,
                                          const Eigen::VectorXd& prior_mean,
                                          const Eigen::VectorXd& prior_var, int n, double zz) {
  const double prior_quad = prior_mean.cwiseAbs2().cwiseQuotient(prior_var).sum();
  const double post_quad =
      (post.precision_factor.matrixU() * post.mean).squaredNorm();  // mt' L L' mt
  const double log_det_cov = post.log_det_V - post.log_det_Vtilde;
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * log_det_cov -
         0.5 * (zz + prior_quad - post_quad);
}

inline double log_marginal_column(const ActiveDesign& d,
                                  const Eigen::Ref<const Eigen::VectorXd>& z) {
  const CoefficientPosterior post = coefficient_posterior(d, z);
  return log_marginal_from_posterior(post, d.prior_mean, d.prior_var, d.n(), z.squaredNorm());
}

struct LatentConditional {
  double mean = 0.0;
  double variance = 1.0;
};

// Moments of z_i | z_{-i} under the marginal above (leave-one-out form):
// with h = x_i' Vt x_i and w = x_i' mt,
//   mean = (w - h z_i) / (1 - h),  variance = 1 / (1 - h).
inline LatentConditional latent_conditional(const ActiveDesign& d,
                                            const Eigen::Ref<const Eigen::VectorXd>& z, int i,
                                            const CoefficientPosterior& cache) {
  const auto x = d.columns.row(i).transpose();
  const double h = x.dot(cache.covariance * x);
  if (!(h < 1.0)) throw NumericalError("leverage reached 1 in latent conditional");
  const double w = x.dot(cache.mean);
  LatentConditional out;
  out.mean = (w - h * z(i)) / (1.0 - h);
  out.variance = 1.0 / (1.0 - h);
  return out;
}

// Keeps the posterior mean consistent after z_i changes.
inline void refresh_after_latent_change(CoefficientPosterior& cache, const ActiveDesign& d, int i,
                                        double old_zi, double new_zi) {
  const double delta = new_zi - old_zi;
  if (delta == 0.0) return;
  cache.mean.noalias() += cache.covariance * d.columns.row(i).transpose() * delta;
}

}  // namespace csps
