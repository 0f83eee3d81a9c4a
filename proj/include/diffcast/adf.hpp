#pragma once

#include <cstddef>
#include <span>

namespace diffcast {

/// Augmented Dickey-Fuller t-statistic.
///
/// Fits dx_t = a + g * x_{t-1} + sum_{i=1..lags} c_i * dx_{t-i} + e_t by
/// ordinary least squares over t = lags + 1 .. n - 1 and returns g / se(g).
/// Strongly negative values indicate a stationary series. Only the statistic
/// is produced; p-values need critical-value tables that are not computed here.
///
/// Throws ErrorKind::Data when the series is too short for the regression or
/// the design matrix is rank deficient (for example a constant series).
double adf_statistic(std::span<const double> series, std::size_t lags = 1);

}  // namespace diffcast
