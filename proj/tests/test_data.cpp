#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "csps/data.hpp"

namespace csps {
namespace {

std::string write_temp(const std::string& name, const std::string& body) {
  const auto dir = std::filesystem::temp_directory_path() / "csps_test_data";
  std::filesystem::create_directories(dir);
  const auto path = (dir / name).string();
  std::ofstream(path) << body;
  return path;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

TEST(LoadCsv, LabelsAndReferenceClass) {
  const auto path = write_temp("basic.csv", "a,b,cls\n1,2,7\n3,4,2\n5,6,11\n7,8,2\n");
  const Dataset ds = load_csv(path, "cls");
  EXPECT_EQ(ds.n(), 4);
  EXPECT_EQ(ds.p(), 2);
  EXPECT_EQ(ds.c(), 2);
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"2", "7", "11"}));
  EXPECT_EQ(ds.labels, (std::vector<int>{1, 0, 2, 0}));
  EXPECT_EQ(ds.design(2, 0), 1.0);
  EXPECT_EQ(ds.design(2, 2), 6.0);

  const Dataset ref = load_csv(path, "cls", std::string("7"));
  EXPECT_EQ(ref.class_names.front(), "7");
  EXPECT_EQ(ref.labels, (std::vector<int>{0, 1, 2, 1}));
  EXPECT_THROW(load_csv(path, "cls", std::string("9")), ValidationError);
}

TEST(LoadCsv, MissingCellNamesRowAndColumn) {
  const auto path = write_temp("missing.csv", "a,b,y\n1,2,0\n3,,1\n");
  const std::string msg = error_of([&] { load_csv(path, "y"); });
  EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("'b'"), std::string::npos) << msg;
}

TEST(LoadCsv, Rejections) {
  const auto path = write_temp("one.csv", "a,y\n1,0\n2,0\n");
  EXPECT_THROW(load_csv(path, "y"), ValidationError);
  EXPECT_THROW(load_csv(path, "label"), ValidationError);
  EXPECT_THROW(load_csv(write_temp("ragged.csv", "a,y\n1,0,3\n"), "y"), ValidationError);
  EXPECT_THROW(load_csv("/nonexistent/file.csv", "y"), ValidationError);
}

TEST(LoadCsv, RoundTripThroughWriter) {
  const SimulatedData sim = simulate_scenario1(5);
  std::ostringstream os;
  write_dataset_csv(os, sim.data);
  const auto path = write_temp("roundtrip.csv", os.str());
  const Dataset back = load_csv(path, "label", std::string("0"));
  EXPECT_EQ(back.design, sim.data.design);
  for (int i = 0; i < back.n(); ++i)
    EXPECT_EQ(back.class_names[back.labels[i]], sim.data.class_names[sim.data.labels[i]]);
}

Dataset small_dataset() {
  Eigen::MatrixXd x(5, 2);
  x << 1, 10, 2, 14, 4, 9, 7, 20, 11, 3;
  return make_dataset(x, {"a", "b", "a", "b", "a"}, {"u", "v"});
}

TEST(Standardize, MomentsAndAffineEquivariance) {
  const Dataset ds = small_dataset();
  const auto [std1, s1] = standardize(ds);
  for (int k = 1; k <= 2; ++k) {
    const auto col = std1.design.col(k).array();
    EXPECT_NEAR(col.mean(), 0.0, 1e-14);
    EXPECT_NEAR(std::sqrt(col.square().sum() / 4.0), 1.0, 1e-14);
  }
  Dataset shifted = ds;
  shifted.design.col(1) = 3.0 * ds.design.col(1).array() + 17.0;
  shifted.design.col(2) = 0.25 * ds.design.col(2).array() - 2.0;
  const auto [std2, s2] = standardize(shifted);
  EXPECT_LT((std1.design - std2.design).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(s2.scale(0), 3.0 * s1.scale(0), 1e-12);
}

TEST(Standardize, ConstantColumnIsAnError) {
  Dataset ds = small_dataset();
  ds.design.col(2).setConstant(4.0);
  const std::string msg = error_of([&] { standardize(ds); });
  EXPECT_NE(msg.find("'v'"), std::string::npos) << msg;
}

TEST(Rbf, KnotSelfValueAndStandardization) {
  Rng rng(3);
  Eigen::MatrixXd v(40, 3);
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index k = 0; k < 3; ++k) v(i, k) = 3.0 * std_normal(rng);
  const Eigen::MatrixXd knots = select_knots(v, 5, rng);
  const RbfConfig cfg = fit_rbf(v, knots, 4.0);
  const Eigen::MatrixXd f = rbf_features(v, cfg);
  for (Eigen::Index k = 0; k < 5; ++k) {
    EXPECT_NEAR(f.col(k).mean(), 0.0, 1e-12);
    const double sd = std::sqrt((f.col(k).array() - f.col(k).mean()).square().sum() / 39.0);
    EXPECT_NEAR(sd, 1.0, 1e-12);
    const Eigen::MatrixXd at_knot = rbf_features(knots.row(k), cfg);
    EXPECT_NEAR(at_knot(0, k), cfg.a(k) + cfg.b(k), 1e-12);
  }
  // Fitting again on already-standardized features is a no-op.
  Eigen::MatrixXd refit = f;
  for (Eigen::Index k = 0; k < f.cols(); ++k) {
    const double mean = f.col(k).mean();
    const double sd = std::sqrt((f.col(k).array() - mean).square().sum() / 39.0);
    refit.col(k) = (f.col(k).array() - mean) / sd;
  }
  EXPECT_LT((refit - f).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rbf, SelectedKnotsAreDistinctRows) {
  Rng rng(8);
  Eigen::MatrixXd v(30, 2);
  for (Eigen::Index i = 0; i < 30; ++i) v.row(i) << i, -i;
  const Eigen::MatrixXd knots = select_knots(v, 10, rng);
  std::set<double> firsts;
  for (Eigen::Index k = 0; k < 10; ++k) {
    firsts.insert(knots(k, 0));
    EXPECT_EQ(knots(k, 1), -knots(k, 0));
  }
  EXPECT_EQ(firsts.size(), 10u);
  EXPECT_THROW(select_knots(v, 31, rng), ValidationError);
}

TEST(Rbf, ZeroVarianceFeatureIsAnError) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(6, 2);
  v(0, 0) = 1e4;
  Eigen::MatrixXd knots(1, 2);
  knots << -1e4, 0.0;  // every construction row is far from the knot
  EXPECT_THROW(fit_rbf(v.bottomRows(5), knots, 1.0), ValidationError);
  Eigen::MatrixXd same = Eigen::MatrixXd::Ones(4, 2);
  EXPECT_THROW(fit_rbf(same, same.topRows(1), 4.0), ValidationError);
}

TEST(Scenario, CovarianceEntries) {
  const Eigen::MatrixXd cov = scenario_covariance();
  EXPECT_EQ(cov(0, 0), 1.0);
  EXPECT_EQ(cov(0, 1), 0.5);
  EXPECT_NEAR(cov(0, 6), 0.8, 1e-15);
  EXPECT_NEAR(cov(0, 7), 0.4, 1e-15);
  EXPECT_NEAR(cov(6, 6), 1.0, 1e-15);
  EXPECT_NEAR(cov(6, 7), 0.32, 1e-15);
  EXPECT_EQ(cov(12, 13), 0.0);
  EXPECT_EQ(cov(0, 12), 0.0);
  EXPECT_EQ(cov(14, 14), 1.0);
}

TEST(Scenario, EmpiricalCorrelations) {
  Rng rng(99);
  const int n = 100000;
  const Eigen::MatrixXd x = sample_scenario_predictors(n, rng);
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / (n - 1.0);
  const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  const Eigen::MatrixXd corr = cov.array() / (sd * sd.transpose()).array();
  const Eigen::MatrixXd target = scenario_covariance();
  EXPECT_LT((corr - target).cwiseAbs().maxCoeff(), 0.01);
  EXPECT_LT((sd.array() - 1.0).abs().maxCoeff(), 0.01);
}

TEST(Scenario, CoefficientPatterns) {
  const CoefficientMatrix b1 = scenario1_beta();
  EXPECT_EQ((b1.rightCols(15).array() != 0.0).count(), 10);
  EXPECT_EQ(b1(0, 1), 0.75);
  EXPECT_EQ(b1(0, 2), 0.5);
  EXPECT_EQ(b1(4, 5), 0.75);
  EXPECT_EQ(b1(4, 6), 0.5);
  EXPECT_EQ(b1(4, 7), 0.0);
  EXPECT_NEAR(b1(2, 0), default_intercept_mean(5), 0.0);

  const CoefficientMatrix b2 = scenario2_beta();
  EXPECT_EQ((b2.rightCols(15).array() != 0.0).count(), 30);
  EXPECT_EQ(b2.block(0, 7, 5, 9).cwiseAbs().maxCoeff(), 0.0);
  for (int j = 0; j < 5; ++j) {
    for (int k = 1; k <= 3; ++k) EXPECT_EQ(std::abs(b2(j, k)), 0.75);
    for (int k = 4; k <= 6; ++k) EXPECT_EQ(std::abs(b2(j, k)), 0.5);
  }
  EXPECT_LT(b2(0, 1), 0.0);  // class 1: bit 0 set
  EXPECT_GT(b2(0, 2), 0.0);
  EXPECT_LT(b2(4, 1), 0.0);  // class 5 = 101b
  EXPECT_GT(b2(4, 2), 0.0);
  EXPECT_LT(b2(4, 3), 0.0);
  for (int a = 0; a < 5; ++a)
    for (int b = a + 1; b < 5; ++b) EXPECT_NE(b2.row(a), b2.row(b));
}

TEST(Scenario, SimulationIsDeterministic) {
  const SimulatedData a = simulate_scenario2(12);
  const SimulatedData b = simulate_scenario2(12);
  const SimulatedData c = simulate_scenario2(13);
  EXPECT_EQ(a.data.design, b.data.design);
  EXPECT_EQ(a.data.labels, b.data.labels);
  EXPECT_NE(a.data.design, c.data.design);
  EXPECT_EQ(a.data.n(), 250);
  EXPECT_EQ(a.data.p(), 15);
  EXPECT_EQ(a.data.c(), 5);
  EXPECT_THROW(simulate_scenario(3, 1), ValidationError);
}

TEST(GenerateLabels, ZeroCoefficientsGiveReferenceWithProbabilityHalfToTheC) {
  const int n = 200000, c = 3;
  const Eigen::MatrixXd design = Eigen::MatrixXd::Ones(n, 1);
  const auto y = generate_labels(design, CoefficientMatrix::Zero(c, 1), std::uint64_t{5});
  const double frac = std::count(y.begin(), y.end(), 0) / static_cast<double>(n);
  EXPECT_NEAR(frac, 0.125, 3.0 * std::sqrt(0.125 * 0.875 / n));
}

TEST(GenerateLabels, DefaultInterceptIsUniform) {
  const int n = 300000, c = 5;
  const Eigen::MatrixXd design = Eigen::MatrixXd::Ones(n, 1);
  const auto y = generate_labels(
      design, CoefficientMatrix::Constant(c, 1, default_intercept_mean(c)), std::uint64_t{6});
  for (int cls = 0; cls <= c; ++cls) {
    const double frac = std::count(y.begin(), y.end(), cls) / static_cast<double>(n);
    EXPECT_NEAR(frac, 1.0 / 6.0, 4.0 * std::sqrt((1.0 / 6.0) * (5.0 / 6.0) / n)) << cls;
  }
}

TEST(GenerateLabels, DominantClass) {
  const int n = 1000;
  const Eigen::MatrixXd design = Eigen::MatrixXd::Ones(n, 1);
  CoefficientMatrix beta = CoefficientMatrix::Zero(4, 1);
  beta(2, 0) = 10.0;
  const auto y = generate_labels(design, beta, std::uint64_t{1});
  EXPECT_EQ(std::count(y.begin(), y.end(), 3), n);
}

void expect_partition(const Split& s, int n) {
  std::vector<int> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  ASSERT_EQ(static_cast<int>(all.size()), n);
  for (int i = 0; i < n; ++i) EXPECT_EQ(all[i], i);
}

TEST(Splits, KFoldSizesAndCoverage) {
  const auto folds = kfold_splits(214, 10, 3);
  ASSERT_EQ(folds.size(), 10u);
  std::vector<int> held(214, 0);
  for (const auto& f : folds) {
    EXPECT_TRUE(f.test.size() == 21 || f.test.size() == 22) << f.test.size();
    expect_partition(f, 214);
    for (int i : f.test) ++held[i];
  }
  EXPECT_TRUE(std::all_of(held.begin(), held.end(), [](int h) { return h == 1; }));
  EXPECT_EQ(kfold_splits(214, 10, 3)[4].test, folds[4].test);
  EXPECT_THROW(kfold_splits(5, 6, 1), ValidationError);
}

TEST(Splits, TenFoldOnTenUnitsIsLeaveOneOut) {
  const auto folds = kfold_splits(10, 10, 77);
  const auto loo = loocv_splits(10);
  std::set<int> seen;
  for (const auto& f : folds) {
    ASSERT_EQ(f.test.size(), 1u);
    seen.insert(f.test[0]);
  }
  EXPECT_EQ(seen.size(), 10u);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(loo[i].test, std::vector<int>{i});
    expect_partition(loo[i], 10);
  }
}

TEST(Splits, TrainTestFraction) {
  const Split s = train_test_split(210, 0.5, 4);
  EXPECT_EQ(s.train.size(), 105u);
  EXPECT_EQ(s.test.size(), 105u);
  expect_partition(s, 210);
  EXPECT_THROW(train_test_split(10, 1.0, 4), ValidationError);
  EXPECT_THROW(train_test_split(1, 0.5, 4), ValidationError);
}

TEST(Dataset, SubsetKeepsRowsAndNames) {
  const Dataset ds = small_dataset();
  const Dataset sub = ds.subset({4, 1});
  EXPECT_EQ(sub.n(), 2);
  EXPECT_EQ(sub.design.row(0), ds.design.row(4));
  EXPECT_EQ(sub.labels, (std::vector<int>{ds.labels[4], ds.labels[1]}));
  EXPECT_EQ(sub.class_names, ds.class_names);
}

}  // namespace
}  // namespace csps
