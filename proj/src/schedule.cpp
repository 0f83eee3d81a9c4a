#include "diffcast/schedule.hpp"

#include <cmath>
#include <numbers>

#include "diffcast/error.hpp"

namespace diffcast {

DiffusionSchedule DiffusionSchedule::cosine(std::size_t steps, double beta_start, double beta_end) {
  require(steps >= 2, ErrorKind::Config, "schedule needs at least 2 diffusion steps");
  require(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0, ErrorKind::Config,
          "schedule endpoints must satisfy 0 < beta_start < beta_end < 1");
  std::vector<double> betas(steps);
  for (std::size_t k = 1; k <= steps; ++k) {
    const double phase = std::numbers::pi * static_cast<double>(k - 1) / static_cast<double>(steps - 1);
    betas[k - 1] = beta_start + (beta_end - beta_start) * (1.0 - std::cos(phase)) / 2.0;
  }
  // Pin the endpoints; cos(pi) is exactly -1 but the first/last values should
  // not depend on rounding in the interpolation.
  betas.front() = beta_start;
  betas.back() = beta_end;
  return from_betas(std::move(betas));
}

DiffusionSchedule DiffusionSchedule::from_betas(std::vector<double> betas) {
  require(betas.size() >= 2, ErrorKind::Config, "schedule needs at least 2 diffusion steps");
  DiffusionSchedule s;
  const std::size_t steps = betas.size();
  s.beta_.assign(steps + 1, 0.0);
  s.alpha_.assign(steps + 1, 1.0);
  s.alpha_bar_.assign(steps + 1, 1.0);
  s.beta_tilde_.assign(steps + 1, 0.0);
  s.sigma_.assign(steps + 1, 0.0);
  for (std::size_t k = 1; k <= steps; ++k) {
    const double b = betas[k - 1];
    require(b > 0.0 && b < 1.0 && std::isfinite(b), ErrorKind::Config,
            "schedule beta values must lie in (0, 1)");
    s.beta_[k] = b;
    s.alpha_[k] = 1.0 - b;
    s.alpha_bar_[k] = s.alpha_bar_[k - 1] * s.alpha_[k];
    s.beta_tilde_[k] = (1.0 - s.alpha_bar_[k - 1]) / (1.0 - s.alpha_bar_[k]) * b;
    s.sigma_[k] = std::sqrt(s.beta_tilde_[k]);
  }
  return s;
}

NoiseDraw NoiseDraw::sample(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  return {Tensor::normal(shape, rng), seed};
}

namespace {

void check_step(std::size_t k, const DiffusionSchedule& schedule) {
  require(k >= 1 && k <= schedule.steps(), ErrorKind::Config,
          "diffusion step " + std::to_string(k) + " outside 1.." + std::to_string(schedule.steps()));
}

Tensor affine(double a, const Tensor& x, double b, const Tensor& y) {
  require(x.shape() == y.shape(), ErrorKind::Shape,
          "shape mismatch " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

void add_noise(Tensor& x, double sigma, const Tensor& noise) {
  if (sigma == 0.0) return;
  require(noise.shape() == x.shape(), ErrorKind::Shape, "noise shape does not match the state");
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += sigma * noise[i];
}

}  // namespace

Tensor forward_sample(const Tensor& x0, std::size_t k, const DiffusionSchedule& schedule,
                      const Tensor& noise) {
  check_step(k, schedule);
  const double ab = schedule.alpha_bar(k);
  return affine(std::sqrt(ab), x0, std::sqrt(1.0 - ab), noise);
}

Tensor recover_x0(const Tensor& xk, std::size_t k, const DiffusionSchedule& schedule,
                  const Tensor& noise) {
  check_step(k, schedule);
  const double ab = schedule.alpha_bar(k);
  return affine(1.0 / std::sqrt(ab), xk, -std::sqrt(1.0 - ab) / std::sqrt(ab), noise);
}

Transition transition(const DiffusionSchedule& schedule, std::size_t from, std::size_t to) {
  check_step(from, schedule);
  require(to < from, ErrorKind::Config, "reverse transition must decrease the step");
  Transition t{};
  const double ab_from = schedule.alpha_bar(from);
  const double ab_to = schedule.alpha_bar(to);
  if (to + 1 == from) {
    t.alpha = schedule.alpha(from);
    t.beta = schedule.beta(from);
  } else {
    t.alpha = ab_from / ab_to;
    t.beta = 1.0 - t.alpha;
  }
  t.one_minus_alpha_bar = 1.0 - ab_from;
  t.data_coef = std::sqrt(ab_to) * t.beta / t.one_minus_alpha_bar;
  t.state_coef = std::sqrt(t.alpha) * (1.0 - ab_to) / t.one_minus_alpha_bar;
  if (to == 0) {
    // abar_0 == 1: the transition collapses onto the data prediction.
    t.data_coef = 1.0;
    t.state_coef = 0.0;
  }
  t.sigma = to + 1 == from ? schedule.sigma(from)
                           : std::sqrt((1.0 - ab_to) / t.one_minus_alpha_bar * t.beta);
  return t;
}

Tensor posterior_mean(const Tensor& x0, const Tensor& xk, std::size_t k,
                      const DiffusionSchedule& schedule) {
  const Transition t = transition(schedule, k, k - 1);
  return affine(t.data_coef, x0, t.state_coef, xk);
}

Tensor denoise_transition_data(const Tensor& x_from, std::size_t from, std::size_t to,
                               const Tensor& x_theta, const DiffusionSchedule& schedule,
                               const Tensor& noise) {
  const Transition t = transition(schedule, from, to);
  Tensor out = affine(t.state_coef, x_from, t.data_coef, x_theta);
  if (to > 0) add_noise(out, t.sigma, noise);
  return out;
}

Tensor denoise_transition_noise(const Tensor& x_from, std::size_t from, std::size_t to,
                                const Tensor& eps_theta, const DiffusionSchedule& schedule,
                                const Tensor& noise) {
  const Transition t = transition(schedule, from, to);
  const double root_alpha = std::sqrt(t.alpha);
  Tensor out = affine(1.0 / root_alpha, x_from,
                      -t.beta / (std::sqrt(t.one_minus_alpha_bar) * root_alpha), eps_theta);
  if (to > 0) add_noise(out, t.sigma, noise);
  return out;
}

Tensor denoise_step_data(const Tensor& xk, std::size_t k, const Tensor& x_theta,
                         const DiffusionSchedule& schedule, const Tensor& noise) {
  check_step(k, schedule);
  return denoise_transition_data(xk, k, k - 1, x_theta, schedule, noise);
}

Tensor denoise_step_noise(const Tensor& xk, std::size_t k, const Tensor& eps_theta,
                          const DiffusionSchedule& schedule, const Tensor& noise) {
  check_step(k, schedule);
  return denoise_transition_noise(xk, k, k - 1, eps_theta, schedule, noise);
}

std::vector<std::size_t> strided_subschedule(const DiffusionSchedule& schedule, std::size_t count) {
  const std::size_t K = schedule.steps();
  require(count >= 1 && count <= K, ErrorKind::Config,
          "sampler steps must lie in 1.." + std::to_string(K));
  if (count == 1) return {K};
  std::vector<std::size_t> out(count);
  const double spacing = static_cast<double>(K - 1) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = K - static_cast<std::size_t>(std::llround(spacing * static_cast<double>(i)));
  }
  return out;
}

}  // namespace diffcast
