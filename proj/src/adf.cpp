#include "diffcast/adf.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "diffcast/error.hpp"

namespace diffcast {

double adf_statistic(std::span<const double> series, std::size_t lags) {
  const std::size_t n = series.size();
  const std::size_t regressors = lags + 2;
  require(n > lags + 1 && n - lags - 1 > regressors, ErrorKind::Data,
          "adf: series of length " + std::to_string(n) + " too short for " + std::to_string(lags) +
              " lags");
  const std::size_t obs = n - lags - 1;

  Eigen::MatrixXd design(static_cast<Eigen::Index>(obs), static_cast<Eigen::Index>(regressors));
  Eigen::VectorXd response(static_cast<Eigen::Index>(obs));
  for (std::size_t r = 0; r < obs; ++r) {
    const std::size_t t = r + lags + 1;
    const auto row = static_cast<Eigen::Index>(r);
    response(row) = series[t] - series[t - 1];
    design(row, 0) = 1.0;
    design(row, 1) = series[t - 1];
    for (std::size_t i = 1; i <= lags; ++i) {
      design(row, static_cast<Eigen::Index>(i + 1)) = series[t - i] - series[t - i - 1];
    }
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  require(qr.rank() == static_cast<Eigen::Index>(regressors), ErrorKind::Data,
          "adf: singular design matrix (rank " + std::to_string(qr.rank()) + " of " +
              std::to_string(regressors) + ")");
  const Eigen::VectorXd coef = qr.solve(response);
  const Eigen::VectorXd resid = response - design * coef;
  const double dof = static_cast<double>(obs - regressors);
  const double s2 = resid.squaredNorm() / dof;

  // (X'X)^{-1} = P R^{-1} R^{-T} P'; only the lagged-level entry is needed.
  const auto k = static_cast<Eigen::Index>(regressors);
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  Eigen::Index pos = 0;
  const auto& perm = qr.colsPermutation().indices();
  while (perm(pos) != 1) ++pos;
  const double var_gamma = s2 * r_inv.row(pos).squaredNorm();
  require(var_gamma > 0.0 && std::isfinite(var_gamma), ErrorKind::Numeric,
          "adf: degenerate standard error");
  return coef(1) / std::sqrt(var_gamma);
}

}  // namespace diffcast
