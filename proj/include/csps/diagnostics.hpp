#pragma once

// Mixing diagnostics on thinned indicator draws and classification scores.

#include <cmath>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "csps/error.hpp"
#include "csps/estimators.hpp"
#include "csps/model.hpp"

namespace csps {

using SwitchMatrix = Eigen::MatrixXd;

// Fraction of consecutive draws in which each entry changed value.
inline SwitchMatrix switch_rates(std::span<const IndicatorMatrix> draws) {
  if (draws.size() < 2) throw ValidationError("switch_rates: need at least two draws");
  SwitchMatrix counts = Eigen::MatrixXd::Zero(draws.front().classes(), draws.front().cols());
  for (std::size_t t = 1; t < draws.size(); ++t) {
    const auto& prev = draws[t - 1].entries();
    const auto& cur = draws[t].entries();
    counts += (prev.array() != cur.array()).cast<double>().matrix();
  }
  return counts / static_cast<double>(draws.size() - 1);
}

// Switch rate expected under independent sampling: 2 M (1 - M).
inline Eigen::MatrixXd iid_switch_reference(const InclusionMatrix& mhat) {
  return (2.0 * mhat.array() * (1.0 - mhat.array())).matrix();
}

struct ScatterPoint {
  int row = 0;
  int col = 0;
  double x = 0.0;
  double y = 0.0;
};

// One point per non-intercept entry, x from `a`, y from `b`.
inline std::vector<ScatterPoint> scatter_pairs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  std::vector<ScatterPoint> pts;
  for (Eigen::Index j = 0; j < a.rows(); ++j)
    for (Eigen::Index k = 1; k < a.cols(); ++k)
      pts.push_back({static_cast<int>(j), static_cast<int>(k), a(j, k), b(j, k)});
  return pts;
}

inline void write_scatter_csv(std::ostream& os, std::span<const ScatterPoint> pts) {
  os.precision(17);
  os << "row,col,x,y\n";
  for (const auto& p : pts) os << p.row << ',' << p.col << ',' << p.x << ',' << p.y << '\n';
}

struct AgreementReport {
  double max_abs_diff = 0.0;
  double rms_diff = 0.0;  // over non-intercept entries
  std::vector<ScatterPoint> pairs;
};

inline AgreementReport chain_agreement(const InclusionMatrix& a, const InclusionMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError("chain_agreement: shape mismatch");
  AgreementReport r;
  r.max_abs_diff = (a - b).cwiseAbs().maxCoeff();
  const Eigen::Index cells = a.rows() * (a.cols() - 1);
  if (cells > 0)
    r.rms_diff = std::sqrt((a.rightCols(a.cols() - 1) - b.rightCols(b.cols() - 1)).squaredNorm() /
                           static_cast<double>(cells));
  r.pairs = scatter_pairs(a, b);
  return r;
}

inline double misclassification_rate(std::span<const int> predictions, std::span<const int> truth) {
  if (predictions.size() != truth.size())
    throw ValidationError("misclassification_rate: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) wrong += predictions[i] != truth[i] ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

// Rows index the true class, columns the predicted class.
inline Eigen::MatrixXi confusion_matrix(std::span<const int> predictions, std::span<const int> truth,
                                        int classes) {
  if (predictions.size() != truth.size()) throw ValidationError("confusion_matrix: length mismatch");
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(classes, classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= classes || predictions[i] < 0 || predictions[i] >= classes)
      throw ValidationError("confusion_matrix: class index out of range");
    ++counts(truth[i], predictions[i]);
  }
  return counts;
}

}  // namespace csps
