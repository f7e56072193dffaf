#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csps/error.hpp"

namespace csps {

// Design with a leading intercept column plus labels coded 0..c, where 0 is
// the reference class.
struct Dataset {
  Eigen::MatrixXd design;                  // n x (p+1)
  std::vector<int> labels;                 // n, values in 0..c
  std::vector<std::string> class_names;    // index -> original label, size c+1
  std::vector<std::string> predictor_names;  // size p

  int n() const { return static_cast<int>(design.rows()); }
  int p() const { return static_cast<int>(design.cols()) - 1; }
  int c() const { return static_cast<int>(class_names.size()) - 1; }

  void validate() const {
    if (design.cols() < 2) throw ValidationError("design needs an intercept and one predictor");
    if (static_cast<Eigen::Index>(labels.size()) != design.rows())
      throw ValidationError("label count does not match design rows");
    if (class_names.size() < 2) throw ValidationError("need at least two classes");
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
      if (design(i, 0) != 1.0) throw ValidationError("design column 0 must be all ones");
      if (!design.row(i).allFinite()) throw ValidationError("design has non-finite values");
    }
    for (int y : labels)
      if (y < 0 || y > c()) throw ValidationError("label outside 0..c");
  }

  // Rows selected by index, same class coding.
  Dataset subset(const std::vector<int>& rows) const {
    Dataset out;
    out.design.resize(static_cast<Eigen::Index>(rows.size()), design.cols());
    out.labels.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.design.row(static_cast<Eigen::Index>(r)) = design.row(rows[r]);
      out.labels.push_back(labels[rows[r]]);
    }
    out.class_names = class_names;
    out.predictor_names = predictor_names;
    return out;
  }
};

// Default "0".."c" names for synthetic data.
inline std::vector<std::string> numbered_classes(int c) {
  std::vector<std::string> names;
  for (int y = 0; y <= c; ++y) names.push_back(std::to_string(y));
  return names;
}

inline std::vector<std::string> numbered_predictors(int p) {
  std::vector<std::string> names;
  for (int k = 1; k <= p; ++k) names.push_back("x" + std::to_string(k));
  return names;
}

}  // namespace csps
