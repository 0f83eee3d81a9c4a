#pragma once

// Independent reference implementations used only by tests. They are written
// for clarity, not speed, and share no code with the library.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace oracle {

/// out[n][o][t] = b[o] + sum_c sum_w k[o][c][w] * x[n][c][t + w - pad]
inline std::vector<double> conv1d(const std::vector<double>& x, std::size_t batch, std::size_t in,
                                  std::size_t len, const std::vector<double>& k, std::size_t out,
                                  std::size_t width, const std::vector<double>& b) {
  std::vector<double> y(batch * out * len, 0.0);
  const long pad = static_cast<long>(width / 2);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t t = 0; t < len; ++t) {
        double s = b[o];
        for (std::size_t c = 0; c < in; ++c)
          for (std::size_t w = 0; w < width; ++w) {
            const long src = static_cast<long>(t) + static_cast<long>(w) - pad;
            if (src < 0 || src >= static_cast<long>(len)) continue;
            s += k[(o * in + c) * width + w] * x[(n * in + c) * len + static_cast<std::size_t>(src)];
          }
        y[(n * out + o) * len + t] = s;
      }
  return y;
}

/// Solves A x = b by Gauss-Jordan elimination with partial pivoting and
/// returns A^{-1} through `inverse`.
inline std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b,
                                 std::vector<std::vector<double>>* inverse = nullptr) {
  const std::size_t n = b.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-300) throw std::runtime_error("singular");
    std::swap(a[col], a[pivot]);
    std::swap(inv[col], inv[pivot]);
    std::swap(b[col], b[pivot]);
    const double d = a[col][col];
    for (std::size_t c = 0; c < n; ++c) {
      a[col][c] /= d;
      inv[col][c] /= d;
    }
    b[col] /= d;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) {
        a[r][c] -= f * a[col][c];
        inv[r][c] -= f * inv[col][c];
      }
      b[r] -= f * b[col];
    }
  }
  if (inverse) *inverse = inv;
  return b;
}

/// ADF t-statistic via the normal equations: regress dx_t on
/// [1, x_{t-1}, dx_{t-1}, ..., dx_{t-p}] and divide gamma by its standard error.
inline double adf_normal_equations(const std::vector<double>& x, std::size_t p) {
  const std::size_t k = p + 2;
  std::vector<std::vector<double>> xtx(k, std::vector<double>(k, 0.0));
  std::vector<double> xty(k, 0.0);
  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  for (std::size_t t = p + 1; t < x.size(); ++t) {
    std::vector<double> row{1.0, x[t - 1]};
    for (std::size_t i = 1; i <= p; ++i) row.push_back(x[t - i] - x[t - i - 1]);
    const double y = x[t] - x[t - 1];
    for (std::size_t i = 0; i < k; ++i) {
      xty[i] += row[i] * y;
      for (std::size_t j = 0; j < k; ++j) xtx[i][j] += row[i] * row[j];
    }
    rows.push_back(row);
    ys.push_back(y);
  }
  std::vector<std::vector<double>> inv;
  const std::vector<double> beta = solve(xtx, xty, &inv);
  double rss = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double fit = 0.0;
    for (std::size_t i = 0; i < k; ++i) fit += rows[r][i] * beta[i];
    rss += (ys[r] - fit) * (ys[r] - fit);
  }
  const double s2 = rss / static_cast<double>(rows.size() - k);
  return beta[1] / std::sqrt(s2 * inv[1][1]);
}

/// Raised-cosine beta written out directly.
inline double cosine_beta(std::size_t k, std::size_t K, double start, double end) {
  const double pi = std::acos(-1.0);
  return start + (end - start) * (1.0 - std::cos(pi * static_cast<double>(k - 1) / static_cast<double>(K - 1))) / 2.0;
}

}  // namespace oracle
