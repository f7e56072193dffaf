#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "csps/data.hpp"
#include "csps/estimators.hpp"
#include "oracles.hpp"

namespace csps {
namespace {

TEST(InclusionProbabilities, IdenticalDrawsReproduceModel) {
  IndicatorMatrix m(2, 3);
  m.set(1, 2, true);
  const std::vector<IndicatorMatrix> draws(5, m);
  EXPECT_EQ(inclusion_probabilities(draws), m.as_double());
}

TEST(InclusionProbabilities, AlternatingEntryGivesHalf) {
  IndicatorMatrix a(1, 1), b(1, 1);
  b.set(0, 1, true);
  const std::vector<IndicatorMatrix> draws{a, b, a, b};
  EXPECT_DOUBLE_EQ(inclusion_probabilities(draws)(0, 1), 0.5);
  EXPECT_THROW(inclusion_probabilities(std::vector<IndicatorMatrix>{}), ValidationError);
}

TEST(PosteriorMeanBeta, BasicContracts) {
  CoefficientMatrix b1 = CoefficientMatrix::Zero(2, 3), b2 = b1;
  b1(0, 0) = 1.0, b1(1, 1) = -2.0;
  b2(0, 0) = 3.0;
  const std::vector<CoefficientMatrix> single{b1};
  EXPECT_EQ(posterior_mean_beta(single), b1);
  const std::vector<CoefficientMatrix> both{b1, b2};
  const CoefficientMatrix mean = posterior_mean_beta(both);
  EXPECT_DOUBLE_EQ(mean(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(mean(1, 1), -1.0);
  EXPECT_EQ(mean(0, 2), 0.0);
  EXPECT_LE(mean.cwiseAbs().maxCoeff(), std::max(b1.cwiseAbs().maxCoeff(), b2.cwiseAbs().maxCoeff()));
  EXPECT_THROW(posterior_mean_beta(std::vector<CoefficientMatrix>{}), ValidationError);
}

TEST(MedianProbabilityModel, ThresholdAndTies) {
  Eigen::MatrixXd mhat = Eigen::MatrixXd::Ones(2, 4);
  EXPECT_EQ(median_probability_model(mhat), IndicatorMatrix::full(2, 3));
  mhat << 1, 0.5, 0.49, 0.9, 1, 0.1, 0.51, 0.0;
  const IndicatorMatrix m = median_probability_model(mhat);
  EXPECT_TRUE(m(0, 1));
  EXPECT_FALSE(m(0, 2));
  EXPECT_TRUE(m(0, 3));
  EXPECT_FALSE(m(1, 1));
  EXPECT_TRUE(m(1, 2));
  EXPECT_TRUE(m(1, 0));
}

TEST(MedianProbabilityModel, IdempotentUnderRethresholding) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::MatrixXd mhat(3, 5);
    for (int j = 0; j < 3; ++j) {
      mhat(j, 0) = 1.0;
      for (int k = 1; k < 5; ++k) mhat(j, k) = u(rng);
    }
    const IndicatorMatrix once = median_probability_model(mhat);
    const std::vector<IndicatorMatrix> draws{once};
    EXPECT_EQ(median_probability_model(inclusion_probabilities(draws)), once);
  }
}

TEST(ClassProbabilities, BinaryCaseAtZero) {
  const ClassDistribution p = class_probabilities_from_means(Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(p(0), 0.5, 1e-12);
  EXPECT_NEAR(p(1), 0.5, 1e-12);
}

TEST(ClassProbabilities, MatchesLatentSimulation) {
  Rng rng(31);
  const long draws = 10000000;
  Eigen::VectorXd means(3);
  means << 0.4, -0.7, 1.1;
  const Eigen::VectorXd mc = oracle::class_probabilities_mc(means, draws, rng);
  const ClassDistribution p = class_probabilities_from_means(means);
  for (int y = 0; y < 4; ++y)
    EXPECT_NEAR(p(y), mc(y), 3.0 * std::sqrt(mc(y) * (1 - mc(y)) / draws)) << y;
}

TEST(ClassProbabilities, ValidSimplexIncludingExtremeMeans) {
  Rng rng(7);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int rep = 0; rep < 300; ++rep) {
    const int c = 1 + rep % 6;
    Eigen::VectorXd means(c);
    for (int j = 0; j < c; ++j) means(j) = rep < 100 ? u(rng) / 10.0 : u(rng);
    const ClassDistribution p = class_probabilities_from_means(means);
    EXPECT_GE(p.minCoeff(), 0.0);
    EXPECT_NEAR(p.sum(), 1.0, 1e-10) << means.transpose();
  }
}

TEST(ClassProbabilities, PermutationEquivariantInNonReferenceClasses) {
  Rng rng(70);
  std::normal_distribution<double> norm(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    CoefficientMatrix beta(4, 3);
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 3; ++k) beta(j, k) = norm(rng);
    Eigen::Vector3d x(1.0, norm(rng), norm(rng));
    std::vector<int> perm{2, 0, 3, 1};
    CoefficientMatrix permuted(4, 3);
    for (int j = 0; j < 4; ++j) permuted.row(j) = beta.row(perm[j]);
    const ClassDistribution a = class_probabilities(beta, x);
    const ClassDistribution b = class_probabilities(permuted, x);
    EXPECT_NEAR(a(0), b(0), 1e-12);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(b(j + 1), a(perm[j] + 1), 1e-11);
  }
}

TEST(PredictiveDistribution, AveragesPerDrawSimplices) {
  Rng rng(12);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::vector<CoefficientMatrix> draws;
  for (int t = 0; t < 6; ++t) {
    CoefficientMatrix b(2, 3);
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 3; ++k) b(j, k) = norm(rng);
    draws.push_back(b);
  }
  const Eigen::Vector3d x(1.0, 0.2, -0.8);
  ClassDistribution manual = ClassDistribution::Zero(3);
  for (const auto& b : draws) manual += class_probabilities(b, x) / 6.0;
  EXPECT_NEAR((predictive_distribution(draws, x) - manual).norm(), 0.0, 1e-14);
  const std::vector<CoefficientMatrix> one{draws[0]};
  EXPECT_NEAR((predictive_distribution(one, x) - class_probabilities(draws[0], x)).norm(), 0.0,
              1e-15);
  EXPECT_THROW(class_probabilities(draws[0], Eigen::Vector2d(1.0, 0.0)), ValidationError);
}

TEST(PredictiveDistribution, PriorChainMatchesInflatedLatentVariance) {
  Dataset ds;
  ds.design.resize(0, 3);
  ds.class_names = numbered_classes(3);
  ds.predictor_names = numbered_predictors(2);
  ChainConfig cfg;
  cfg.hp = Hyperparameters::defaults(3, 2);
  cfg.iterations = 21000;
  cfg.burn_in = 1000;
  cfg.thin = 10;
  const ChainOutput out = run_chain(ds, cfg);
  const ClassDistribution p = predictive_distribution(out, Eigen::Vector3d(1.0, 0.0, 0.0));
  // Intercepts are N(mu0, tau2) a priori, so latents are N(mu0, 1 + tau2);
  // rescaling to unit variance leaves the class rule unchanged.
  const double scale = std::sqrt(1.0 + cfg.hp.tau2);
  const ClassDistribution expect =
      class_probabilities_from_means(Eigen::VectorXd::Constant(3, cfg.hp.mu(0) / scale));
  for (int y = 0; y < 4; ++y) EXPECT_NEAR(p(y), expect(y), 0.02);
}

TEST(ConditionalBetaEstimate, InterceptOnlyWithoutDataReturnsPriorMeans) {
  Dataset ds;
  ds.design.resize(0, 3);
  ds.class_names = numbered_classes(2);
  ds.predictor_names = numbered_predictors(2);
  ChainConfig cfg;
  cfg.hp = Hyperparameters::defaults(2, 2);
  cfg.iterations = 41000;
  cfg.burn_in = 1000;
  cfg.thin = 1;
  const CoefficientMatrix est = conditional_beta_estimate(ds, IndicatorMatrix(2, 2), cfg);
  for (int j = 0; j < 2; ++j) {
    EXPECT_NEAR(est(j, 0), cfg.hp.mu(0), 3 * std::sqrt(cfg.hp.tau2 / 40000.0));
    EXPECT_EQ(est(j, 1), 0.0);
    EXPECT_EQ(est(j, 2), 0.0);
  }
}

// c = 1, one predictor: E(beta | M, D) by two-dimensional quadrature.
TEST(ConditionalBetaEstimate, MatchesQuadratureOracle) {
  Dataset ds;
  ds.design = Eigen::MatrixXd(6, 2);
  ds.design.col(0).setOnes();
  ds.design.col(1) << -1.2, -0.5, 0.0, 0.3, 0.9, 1.6;
  ds.labels = {0, 1, 0, 0, 1, 1};
  ds.class_names = numbered_classes(1);
  ds.predictor_names = numbered_predictors(1);
  ChainConfig cfg;
  cfg.hp = Hyperparameters::defaults(1, 1);
  cfg.iterations = 202000;
  cfg.burn_in = 2000;
  cfg.thin = 2;
  const IndicatorMatrix full = IndicatorMatrix::full(1, 1);
  const CoefficientMatrix est = conditional_beta_estimate(ds, full, cfg);

  const Eigen::VectorXd mu = cfg.hp.mu;
  const Eigen::VectorXd var = Eigen::VectorXd::Constant(2, cfg.hp.tau2 / 2);
  auto like = [&](const Eigen::VectorXd& b) {
    return oracle::probit_likelihood(ds.design, ds.labels, b);
  };
  const double z = oracle::adaptive_gaussian_expectation(mu, var, like);
  for (int a = 0; a < 2; ++a) {
    const double num = oracle::adaptive_gaussian_expectation(
        mu, var, [&](const Eigen::VectorXd& b) { return b(a) * like(b); });
    EXPECT_NEAR(est(0, a), num / z, 0.03) << a;
  }
}

TEST(AverageSquaredError, Arithmetic) {
  CoefficientMatrix truth = CoefficientMatrix::Zero(5, 16);
  EXPECT_EQ(average_squared_error(truth, truth), 0.0);
  CoefficientMatrix est = truth;
  est(2, 7) = 2.0;
  EXPECT_DOUBLE_EQ(average_squared_error(est, truth), 0.05);
  EXPECT_THROW(average_squared_error(CoefficientMatrix::Zero(5, 15), truth), ValidationError);
}

}  // namespace
}  // namespace csps
