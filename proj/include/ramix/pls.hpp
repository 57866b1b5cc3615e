#pragma once

// PLS2 regression fitted with NIPALS and deflation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ramix/errors.hpp"
#include "ramix/rng.hpp"

namespace ramix {

struct NipalsOptions {
  double tolerance = 1e-10;  // relative change of the score vector
  int max_iterations = 500;
};

/// Raw NIPALS output: one column per extracted component.
struct NipalsResult {
  Eigen::MatrixXd weights;     // p x k, unit columns
  Eigen::MatrixXd x_loadings;  // p x k
  Eigen::MatrixXd y_loadings;  // q x k
  Eigen::MatrixXd x_scores;    // n x k
  Eigen::RowVectorXd x_mean;
  Eigen::RowVectorXd y_mean;
  std::vector<int> iterations;  // inner iterations used per component

  int components() const noexcept { return static_cast<int>(weights.cols()); }
};

struct PlsModel {
  int components = 0;
  Eigen::MatrixXd weights;       // p x k
  Eigen::MatrixXd x_loadings;    // p x k
  Eigen::MatrixXd y_loadings;    // q x k
  Eigen::MatrixXd coefficients;  // p x q, acts on centred X
  Eigen::RowVectorXd x_mean;
  Eigen::RowVectorXd y_mean;

  Eigen::Index inputs() const noexcept { return x_mean.size(); }
  Eigen::Index outputs() const noexcept { return y_mean.size(); }
};

namespace detail {

inline void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw ValidationError(std::string(what) + " contains non-finite values");
}

/// B = W (P'W)^-1 Q' using the first k components.
inline Eigen::MatrixXd pls_coefficients(const Eigen::MatrixXd& w, const Eigen::MatrixXd& p, const Eigen::MatrixXd& q,
                                        int k) {
  const auto wk = w.leftCols(k);
  const Eigen::MatrixXd ptw = p.leftCols(k).transpose() * wk;
  return wk * ptw.partialPivLu().solve(q.leftCols(k).transpose());
}

}  // namespace detail

/**
 * NIPALS for PLS2. X is mean-centred (no variance scaling), Y is
 * mean-centred. For each component, starting from the Y column with the
 * largest residual sum of squares:
 *
 *   w = X'u / |X'u|,  t = Xw,  q = Y't / t't,  u = Yq / q'q
 *
 * until |t - t_prev| / |t| < tolerance, then X -= t p', Y -= t q' with
 * p = X't / t't. Extraction stops early, with fewer than k components, once
 * the X or Y residual is numerically zero; nothing further can be explained.
 */
inline NipalsResult nipals(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int k, NipalsOptions opt = {}) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  const Eigen::Index q = y.cols();
  if (y.rows() != n) throw DimensionError("PLS: X and Y row counts differ");
  if (n < 2) throw ValidationError("PLS needs at least 2 rows");
  if (k < 1 || k > std::min<Eigen::Index>(n - 1, p))
    throw ValidationError("PLS: component count " + std::to_string(k) + " outside [1, min(n-1, p)]");
  detail::require_finite(x, "X");
  detail::require_finite(y, "Y");

  NipalsResult r;
  r.x_mean = x.colwise().mean();
  r.y_mean = y.colwise().mean();
  Eigen::MatrixXd xr = x.rowwise() - r.x_mean;
  Eigen::MatrixXd yr = y.rowwise() - r.y_mean;
  const double x_norm0 = xr.squaredNorm();
  const double y_norm0 = yr.squaredNorm();
  constexpr double kExhausted = 1e-24;

  r.weights.resize(p, k);
  r.x_loadings.resize(p, k);
  r.y_loadings.resize(q, k);
  r.x_scores.resize(n, k);

  int extracted = 0;
  for (int a = 0; a < k; ++a) {
    if (xr.squaredNorm() <= kExhausted * x_norm0 || yr.squaredNorm() <= kExhausted * y_norm0) break;

    Eigen::Index start = 0;
    yr.colwise().squaredNorm().maxCoeff(&start);
    Eigen::VectorXd u = yr.col(start);
    Eigen::VectorXd w(p), t(n), t_old = Eigen::VectorXd::Zero(n), yq(q);

    bool converged = false;
    int it = 0;
    while (it < opt.max_iterations) {
      ++it;
      w.noalias() = xr.transpose() * u;
      const double wn = w.norm();
      if (!(wn > 0.0)) throw ConvergenceError("PLS: zero weight vector", a);
      w /= wn;
      t.noalias() = xr * w;
      const double tt = t.squaredNorm();
      yq.noalias() = yr.transpose() * t / tt;
      const double change = (t - t_old).norm() / std::max(t.norm(), std::numeric_limits<double>::min());
      if (change < opt.tolerance) {
        converged = true;
        break;
      }
      t_old = t;
      u.noalias() = yr * yq / yq.squaredNorm();
    }
    if (!converged)
      throw ConvergenceError("PLS: component " + std::to_string(a + 1) + " did not converge in " +
                                 std::to_string(opt.max_iterations) + " iterations",
                             a);

    const double tt = t.squaredNorm();
    const Eigen::VectorXd pl = xr.transpose() * t / tt;
    const Eigen::VectorXd ql = yr.transpose() * t / tt;
    xr.noalias() -= t * pl.transpose();
    yr.noalias() -= t * ql.transpose();

    r.weights.col(a) = w;
    r.x_loadings.col(a) = pl;
    r.y_loadings.col(a) = ql;
    r.x_scores.col(a) = t;
    r.iterations.push_back(it);
    ++extracted;
  }
  if (extracted == 0) throw ValidationError("PLS: X or Y has no variance to explain");
  r.weights.conservativeResize(p, extracted);
  r.x_loadings.conservativeResize(p, extracted);
  r.y_loadings.conservativeResize(q, extracted);
  r.x_scores.conservativeResize(n, extracted);
  return r;
}

inline PlsModel model_from_nipals(const NipalsResult& r, int k) {
  k = std::min(k, r.components());
  PlsModel m;
  m.components = k;
  m.weights = r.weights.leftCols(k);
  m.x_loadings = r.x_loadings.leftCols(k);
  m.y_loadings = r.y_loadings.leftCols(k);
  m.coefficients = detail::pls_coefficients(r.weights, r.x_loadings, r.y_loadings, k);
  m.x_mean = r.x_mean;
  m.y_mean = r.y_mean;
  return m;
}

inline PlsModel fit_pls(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int k, NipalsOptions opt = {}) {
  return model_from_nipals(nipals(x, y, k, opt), k);
}

inline Eigen::MatrixXd predict_pls(const PlsModel& m, const Eigen::MatrixXd& x) {
  if (x.cols() != m.inputs())
    throw DimensionError("PLS model expects " + std::to_string(m.inputs()) + " columns, got " +
                         std::to_string(x.cols()));
  detail::require_finite(x, "X");
  return ((x.rowwise() - m.x_mean) * m.coefficients).rowwise() + m.y_mean;
}

/**
 * Picks the component count with the lowest validation RMSE on an internal
 * split (first ceil((1 - validation_fraction) * n) rows of a seeded
 * permutation train, the rest validate). Any k whose RMSE is within 1e-6 of
 * the minimum counts as a tie, and ties go to the smaller k. If component j
 * does not converge on the internal split, only k < j are considered.
 */
inline int select_components(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int max_k,
                             double validation_fraction = 0.25, std::uint64_t seed = 0, NipalsOptions opt = {}) {
  if (max_k < 1) throw ValidationError("select_components: max k must be >= 1");
  if (max_k == 1) return 1;
  const Eigen::Index n = x.rows();
  if (n < 3) return 1;

  RngStream rng(seed, 0xC0317ull);
  const auto perm = rng.permutation(static_cast<std::size_t>(n));
  auto n_fit = static_cast<Eigen::Index>(std::ceil((1.0 - validation_fraction) * static_cast<double>(n) - 1e-9));
  n_fit = std::clamp<Eigen::Index>(n_fit, 2, n - 1);
  const Eigen::Index n_val = n - n_fit;

  Eigen::MatrixXd xf(n_fit, x.cols()), yf(n_fit, y.cols()), xv(n_val, x.cols()), yv(n_val, y.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]);
    if (i < n_fit) {
      xf.row(i) = x.row(src);
      yf.row(i) = y.row(src);
    } else {
      xv.row(i - n_fit) = x.row(src);
      yv.row(i - n_fit) = y.row(src);
    }
  }
  int kmax = static_cast<int>(std::min<Eigen::Index>({static_cast<Eigen::Index>(max_k), n_fit - 1, x.cols()}));
  // A component that fails to converge caps the candidates at the ones before it.
  NipalsResult r;
  for (;;) {
    try {
      r = nipals(xf, yf, kmax, opt);
      break;
    } catch (const ConvergenceError& e) {
      if (e.component() < 1) throw;
      kmax = e.component();
    }
  }
  const Eigen::MatrixXd xv_c = xv.rowwise() - r.x_mean;

  std::vector<double> rmse;
  for (int k = 1; k <= r.components(); ++k) {
    const Eigen::MatrixXd b = detail::pls_coefficients(r.weights, r.x_loadings, r.y_loadings, k);
    const Eigen::MatrixXd pred = (xv_c * b).rowwise() + r.y_mean;
    rmse.push_back(std::sqrt((pred - yv).squaredNorm() / static_cast<double>(pred.size())));
  }
  const double best = *std::min_element(rmse.begin(), rmse.end());
  for (std::size_t i = 0; i < rmse.size(); ++i)
    if (rmse[i] <= best + 1e-6) return static_cast<int>(i + 1);
  return 1;
}

// ---------------------------------------------------------------------------
// Serialisation
// ---------------------------------------------------------------------------

inline constexpr int kPlsFormatVersion = 1;

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto r = j.at("rows").get<Eigen::Index>();
  const auto c = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != r) throw ParseError("matrix row count mismatch");
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& row = data.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != c) throw ParseError("matrix column count mismatch");
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

inline nlohmann::json row_to_json(const Eigen::RowVectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::RowVectorXd row_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline nlohmann::json pls_to_json(const PlsModel& m) {
  return {{"format", "ramix-pls"},
          {"version", kPlsFormatVersion},
          {"components", m.components},
          {"weights", detail::matrix_to_json(m.weights)},
          {"x_loadings", detail::matrix_to_json(m.x_loadings)},
          {"y_loadings", detail::matrix_to_json(m.y_loadings)},
          {"coefficients", detail::matrix_to_json(m.coefficients)},
          {"x_mean", detail::row_to_json(m.x_mean)},
          {"y_mean", detail::row_to_json(m.y_mean)}};
}

inline PlsModel pls_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "ramix-pls") throw ParseError("not a PLS model");
    if (j.at("version").get<int>() != kPlsFormatVersion) throw ParseError("unsupported PLS model version");
    PlsModel m;
    m.components = j.at("components").get<int>();
    m.weights = detail::matrix_from_json(j.at("weights"));
    m.x_loadings = detail::matrix_from_json(j.at("x_loadings"));
    m.y_loadings = detail::matrix_from_json(j.at("y_loadings"));
    m.coefficients = detail::matrix_from_json(j.at("coefficients"));
    m.x_mean = detail::row_from_json(j.at("x_mean"));
    m.y_mean = detail::row_from_json(j.at("y_mean"));
    if (m.coefficients.rows() != m.x_mean.size() || m.coefficients.cols() != m.y_mean.size())
      throw ParseError("PLS coefficient shape does not match the stored means");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("PLS model: ") + e.what());
  }
}

}  // namespace ramix
