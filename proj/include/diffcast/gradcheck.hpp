#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "diffcast/rng.hpp"

namespace diffcast {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t probes = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central-difference check of `analytic` (d loss / d values) at up to
/// `probe_count` distinct positions drawn from `rng`. Each probe perturbs one
/// entry of `values` in place by +-step, re-evaluates `loss`, and restores it.
/// When values has fewer entries than probe_count every entry is probed.
GradCheckReport finite_diff_check(const std::function<double()>& loss, std::span<double> values,
                                  std::span<const double> analytic, std::size_t probe_count,
                                  Rng& rng, double step = 1e-5);

/// Same check over entries scattered across several tensors.
GradCheckReport finite_diff_check(const std::function<double()>& loss, std::span<double* const> values,
                                  std::span<const double> analytic, std::size_t probe_count,
                                  Rng& rng, double step = 1e-5);

}  // namespace diffcast
