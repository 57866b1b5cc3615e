#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ramix/errors.hpp"

namespace ramix {

namespace detail {

inline void check_pair(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size()) throw DimensionError("metric inputs differ in length");
  if (y.size() < 2) throw ValidationError("metrics need at least 2 samples");
}

inline double total_sum_of_squares(const Eigen::VectorXd& y) {
  const double ss = (y.array() - y.mean()).square().sum();
  if (!(ss > 0.0)) throw ValidationError("target has zero variance; R2 and explained variance are undefined");
  return ss;
}

}  // namespace detail

inline double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  detail::check_pair(y, yhat);
  return std::sqrt((y - yhat).squaredNorm() / static_cast<double>(y.size()));
}

/// 1 - SS_res / SS_tot
inline double r2_score(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  detail::check_pair(y, yhat);
  const double ss_tot = detail::total_sum_of_squares(y);
  return 1.0 - (y - yhat).squaredNorm() / ss_tot;
}

/// 1 - Var(y - yhat) / Var(y)
inline double explained_variance(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  detail::check_pair(y, yhat);
  const double ss_tot = detail::total_sum_of_squares(y);
  const Eigen::ArrayXd resid = (y - yhat).array();
  return 1.0 - (resid - resid.mean()).square().sum() / ss_tot;
}

/// Per-column metrics plus their uniform averages.
struct RegressionMetrics {
  std::vector<double> rmse, r2, explained_variance;
  double rmse_avg = 0.0, r2_avg = 0.0, explained_variance_avg = 0.0;

  friend bool operator==(const RegressionMetrics&, const RegressionMetrics&) = default;
};

inline RegressionMetrics regression_metrics(const Eigen::MatrixXd& y, const Eigen::MatrixXd& yhat) {
  if (y.rows() != yhat.rows() || y.cols() != yhat.cols()) throw DimensionError("metric matrices differ in shape");
  if (y.cols() == 0) throw DimensionError("metrics need at least one target column");
  RegressionMetrics m;
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    const Eigen::VectorXd a = y.col(j), b = yhat.col(j);
    m.rmse.push_back(rmse(a, b));
    m.r2.push_back(r2_score(a, b));
    m.explained_variance.push_back(explained_variance(a, b));
  }
  const double k = static_cast<double>(y.cols());
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    m.rmse_avg += m.rmse[static_cast<std::size_t>(j)] / k;
    m.r2_avg += m.r2[static_cast<std::size_t>(j)] / k;
    m.explained_variance_avg += m.explained_variance[static_cast<std::size_t>(j)] / k;
  }
  return m;
}

}  // namespace ramix
