#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "diffcast/tensor.hpp"

namespace diffcast {

/// Variance schedule for K diffusion steps, indexed k = 1..K. Step 0 is the
/// clean-data convention: alpha_bar(0) == 1 and beta(0) == 0.
class DiffusionSchedule {
 public:
  /// Raised-cosine interpolation of beta between the two endpoints:
  /// beta_k = start + (end - start) * (1 - cos(pi (k-1) / (K-1))) / 2.
  static DiffusionSchedule cosine(std::size_t steps = 100, double beta_start = 1e-4,
                                  double beta_end = 0.1);
  /// Rebuilds a schedule from its beta array (checkpoint path).
  static DiffusionSchedule from_betas(std::vector<double> betas);

  std::size_t steps() const noexcept { return beta_.size() - 1; }

  double beta(std::size_t k) const { return beta_.at(k); }
  double alpha(std::size_t k) const { return alpha_.at(k); }
  double alpha_bar(std::size_t k) const { return alpha_bar_.at(k); }
  double beta_tilde(std::size_t k) const { return beta_tilde_.at(k); }
  double sigma(std::size_t k) const { return sigma_.at(k); }

  /// beta_1..beta_K.
  std::vector<double> betas() const { return {beta_.begin() + 1, beta_.end()}; }

 private:
  std::vector<double> beta_, alpha_, alpha_bar_, beta_tilde_, sigma_;
};

/// One Gaussian draw shaped like the target window, with the seed it came from.
struct NoiseDraw {
  Tensor epsilon;
  std::uint64_t seed = 0;

  static NoiseDraw sample(const Shape& shape, std::uint64_t seed);
};

/// x^k = sqrt(abar_k) x^0 + sqrt(1 - abar_k) eps
Tensor forward_sample(const Tensor& x0, std::size_t k, const DiffusionSchedule& schedule,
                      const Tensor& noise);

/// Inverse of forward_sample for the same noise.
Tensor recover_x0(const Tensor& xk, std::size_t k, const DiffusionSchedule& schedule,
                  const Tensor& noise);

/// Mean of q(x^{k-1} | x^k, x^0).
Tensor posterior_mean(const Tensor& x0, const Tensor& xk, std::size_t k,
                      const DiffusionSchedule& schedule);

/// Coefficients of a (possibly strided) reverse transition from step `from`
/// to step `to` < from. For to == from - 1 these are the usual per-step
/// values; larger gaps use the composite ratio abar_from / abar_to in place of
/// alpha.
struct Transition {
  double data_coef;    // multiplies the x^0 prediction
  double state_coef;   // multiplies x^from
  double sigma;        // noise standard deviation
  double alpha;        // abar_from / abar_to
  double beta;         // 1 - alpha
  double one_minus_alpha_bar;
};

Transition transition(const DiffusionSchedule& schedule, std::size_t from, std::size_t to);

/// x^{k-1} from a data (x^0) prediction. The noise term is dropped at k = 1.
Tensor denoise_step_data(const Tensor& xk, std::size_t k, const Tensor& x_theta,
                         const DiffusionSchedule& schedule, const Tensor& noise);

/// x^{k-1} from a noise prediction. The noise term is dropped at k = 1.
Tensor denoise_step_noise(const Tensor& xk, std::size_t k, const Tensor& eps_theta,
                          const DiffusionSchedule& schedule, const Tensor& noise);

/// Strided variants used by the accelerated sampler.
Tensor denoise_transition_data(const Tensor& x_from, std::size_t from, std::size_t to,
                               const Tensor& x_theta, const DiffusionSchedule& schedule,
                               const Tensor& noise);
Tensor denoise_transition_noise(const Tensor& x_from, std::size_t from, std::size_t to,
                                const Tensor& eps_theta, const DiffusionSchedule& schedule,
                                const Tensor& noise);

/// Evenly spaced decreasing subset of {K, ..., 1} with `count` entries that
/// always includes K and 1 (count == 1 yields just {K}).
std::vector<std::size_t> strided_subschedule(const DiffusionSchedule& schedule, std::size_t count);

}  // namespace diffcast
