#include "diffcast/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "diffcast/error.hpp"

namespace diffcast {

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport finite_diff_check(const std::function<double()>& loss, std::span<double> values,
                                  std::span<const double> analytic, std::size_t probe_count,
                                  Rng& rng, double step) {
  std::vector<double*> pointers(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) pointers[i] = &values[i];
  return finite_diff_check(loss, std::span<double* const>(pointers), analytic, probe_count, rng, step);
}

GradCheckReport finite_diff_check(const std::function<double()>& loss, std::span<double* const> values,
                                  std::span<const double> analytic, std::size_t probe_count,
                                  Rng& rng, double step) {
  require(values.size() == analytic.size(), ErrorKind::Shape,
          "finite_diff_check: value and gradient sizes differ");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `count` entries become the probe set.
  const std::size_t count = std::min(probe_count, order.size());
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (order.size() - i));
    std::swap(order[i], order[j]);
  }

  GradCheckReport report;
  for (std::size_t p = 0; p < count; ++p) {
    const std::size_t idx = order[p];
    double& value = *values[idx];
    const double saved = value;
    value = saved + step;
    const double up = loss();
    value = saved - step;
    const double down = loss();
    value = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double err = relative_error(analytic[idx], numeric);
    if (p == 0 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = idx;
      report.worst_analytic = analytic[idx];
      report.worst_numeric = numeric;
    }
    ++report.probes;
  }
  return report;
}

}  // namespace diffcast
