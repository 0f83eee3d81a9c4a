#pragma once

#include <cstdint>
#include <vector>

#include "diffcast/nn.hpp"

namespace diffcast {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moments are allocated lazily on the first step, one pair per parameter in
/// the order the parameters are passed; that order must stay fixed.
struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step_count = 0;
};

/// Bias-corrected Adam update. Throws ErrorKind::Numeric naming the offending
/// parameter if any gradient is non-finite; nothing is modified in that case.
void adam_step(const std::vector<Param*>& params, AdamState& state);

}  // namespace diffcast
