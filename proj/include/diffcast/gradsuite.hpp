#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace diffcast {

struct GradGroupResult {
  std::string name;
  std::size_t probes = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

/// Central finite-difference checks over every layer, the conditioning
/// network, the denoiser and both end-to-end training losses, on small
/// seeded shapes. Convolution biases that feed a train-mode batchnorm have an
/// identically zero gradient, so they are probed in the eval-mode groups.
std::vector<GradGroupResult> run_gradient_suite(std::uint64_t seed, std::size_t probes = 12,
                                                double tolerance = 1e-4);

}  // namespace diffcast
