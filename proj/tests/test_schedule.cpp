#include <gtest/gtest.h>

#include <cmath>

#include "diffcast/error.hpp"
#include "diffcast/schedule.hpp"
#include "oracles.hpp"

using namespace diffcast;

TEST(Schedule, EndpointsAreExact) {
  const auto s = DiffusionSchedule::cosine(100, 1e-4, 0.1);
  EXPECT_EQ(s.beta(1), 1e-4);
  EXPECT_EQ(s.beta(100), 0.1);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
}

TEST(Schedule, MatchesDirectFormula) {
  const auto s = DiffusionSchedule::cosine(100, 1e-4, 0.1);
  double abar = 1.0;
  for (std::size_t k = 1; k <= 100; ++k) {
    const double beta = oracle::cosine_beta(k, 100, 1e-4, 0.1);
    abar *= 1.0 - beta;
    EXPECT_NEAR(s.beta(k), beta, 1e-15);
    EXPECT_NEAR(s.alpha_bar(k), abar, 1e-14);
  }
}

TEST(Schedule, ThreeStepMidpoint) {
  const auto s = DiffusionSchedule::cosine(3, 1e-4, 0.1);
  EXPECT_NEAR(s.beta(2), 0.05005, 1e-15);
  EXPECT_NEAR(s.alpha_bar(1), 0.9999, 1e-15);
}

TEST(Schedule, PosteriorVarianceVanishesAtFirstStep) {
  const auto s = DiffusionSchedule::cosine();
  EXPECT_EQ(s.sigma(1), 0.0);
  for (std::size_t k = 2; k <= 100; ++k) {
    const double expected = (1.0 - s.alpha_bar(k - 1)) / (1.0 - s.alpha_bar(k)) * s.beta(k);
    EXPECT_NEAR(s.beta_tilde(k), expected, 1e-15);
  }
}

TEST(Schedule, RejectsBadInput) {
  EXPECT_THROW(DiffusionSchedule::cosine(1), Error);
  EXPECT_THROW(DiffusionSchedule::cosine(10, 0.2, 0.1), Error);
  EXPECT_THROW(DiffusionSchedule::cosine(10, 1e-4, 1.0), Error);
}

TEST(Schedule, FromBetasRoundTrip) {
  const auto s = DiffusionSchedule::cosine(50);
  const auto t = DiffusionSchedule::from_betas(s.betas());
  for (std::size_t k = 0; k <= 50; ++k) EXPECT_EQ(s.alpha_bar(k), t.alpha_bar(k));
}

TEST(ForwardSample, ZeroNoiseAndScalarCase) {
  const auto s = DiffusionSchedule::cosine();
  const Tensor x0({1, 3}, {1.0, -2.0, 0.5});
  const Tensor y = forward_sample(x0, 40, s, Tensor({1, 3}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(y[i], std::sqrt(s.alpha_bar(40)) * x0[i], 1e-15);

  const double ab = s.alpha_bar(60);
  const Tensor one = forward_sample(Tensor({1}, {1.0}), 60, s, Tensor({1}, {1.0}));
  EXPECT_NEAR(one[0], std::sqrt(ab) + std::sqrt(1.0 - ab), 1e-15);
}

TEST(ForwardSample, QuarterAlphaBarArithmetic) {
  // (1 - 0.5)(1 - 0.5) = 0.25, so x^2 = 0.5 + sqrt(0.75).
  const auto s = DiffusionSchedule::from_betas({0.5, 0.5});
  const Tensor y = forward_sample(Tensor({1}, {1.0}), 2, s, Tensor({1}, {1.0}));
  EXPECT_NEAR(y[0], 1.36603, 1e-5);
}

TEST(ForwardSample, TerminalStepIsMostlyNoise) {
  const auto s = DiffusionSchedule::cosine();
  EXPECT_LT(s.alpha_bar(100), 0.01);
}

TEST(RecoverX0, RoundTripAtEveryStep) {
  const auto s = DiffusionSchedule::cosine();
  Rng rng(1);
  double worst = 0.0;
  for (std::size_t k = 1; k <= 100; ++k) {
    const Tensor x0 = Tensor::normal({2, 8}, rng);
    const Tensor eps = Tensor::normal({2, 8}, rng);
    worst = std::max(worst, max_abs_diff(recover_x0(forward_sample(x0, k, s, eps), k, s, eps), x0));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(PosteriorMean, FirstStepCollapsesOntoData) {
  const auto s = DiffusionSchedule::cosine();
  const Tensor x0({1, 2}, {0.3, -1.2});
  const Tensor xk({1, 2}, {5.0, 7.0});
  EXPECT_LT(max_abs_diff(posterior_mean(x0, xk, 1, s), x0), 1e-15);
}

TEST(PosteriorMean, ScalarFormulaAndLinearity) {
  const auto s = DiffusionSchedule::cosine();
  for (std::size_t k : {2u, 17u, 99u}) {
    const double v = 1.7;
    const double expected = v *
                            (std::sqrt(s.alpha_bar(k - 1)) * s.beta(k) +
                             std::sqrt(s.alpha(k)) * (1.0 - s.alpha_bar(k - 1))) /
                            (1.0 - s.alpha_bar(k));
    EXPECT_NEAR(posterior_mean(Tensor({1}, {v}), Tensor({1}, {v}), k, s)[0], expected, 1e-14);
  }
  Rng rng(2);
  const Tensor a = Tensor::normal({3, 4}, rng), b = Tensor::normal({3, 4}, rng);
  EXPECT_LT(max_abs_diff(posterior_mean(2.0 * a, 2.0 * b, 30, s), 2.0 * posterior_mean(a, b, 30, s)), 1e-14);
}

TEST(DenoiseStepData, Identities) {
  const auto s = DiffusionSchedule::cosine();
  Rng rng(3);
  const Tensor x0 = Tensor::normal({2, 5}, rng);
  const Tensor xk = Tensor::normal({2, 5}, rng);
  const Tensor noise = Tensor::normal({2, 5}, rng);
  EXPECT_EQ(denoise_step_data(xk, 1, x0, s, noise), x0);

  const std::size_t k = 50;
  const Tensor y = denoise_step_data(xk, k, Tensor({2, 5}), s, Tensor({2, 5}));
  const double c = std::sqrt(s.alpha(k)) * (1.0 - s.alpha_bar(k - 1)) / (1.0 - s.alpha_bar(k));
  EXPECT_LT(max_abs_diff(y, c * xk), 1e-15);
}

TEST(DenoiseStepData, OracleChainReachesData) {
  const auto s = DiffusionSchedule::cosine();
  Rng rng(4);
  const Tensor x0 = Tensor::normal({2, 6}, rng);
  Tensor x = Tensor::normal({2, 6}, rng);
  const Tensor zero({2, 6});
  for (std::size_t k = 100; k >= 1; --k) x = denoise_step_data(x, k, x0, s, zero);
  EXPECT_LT(max_abs_diff(x, x0), 1e-8);
}

TEST(DenoiseStepNoise, Identities) {
  const auto s = DiffusionSchedule::cosine();
  Rng rng(5);
  const Tensor xk = Tensor::normal({1, 4}, rng);
  const Tensor zero({1, 4});
  EXPECT_LT(max_abs_diff(denoise_step_noise(xk, 30, zero, s, zero), xk * (1.0 / std::sqrt(s.alpha(30)))), 1e-15);
  EXPECT_EQ(denoise_step_noise(zero, 30, zero, s, zero), zero);
}

TEST(DenoiseStepNoise, EquivalentToDataStepAtEveryK) {
  const auto s = DiffusionSchedule::cosine();
  Rng rng(6);
  double worst = 0.0;
  for (std::size_t k = 1; k <= 100; ++k) {
    const Tensor xk = Tensor::normal({2, 4}, rng);
    const Tensor x_theta = Tensor::normal({2, 4}, rng);
    Tensor eps = xk - std::sqrt(s.alpha_bar(k)) * x_theta;
    eps *= 1.0 / std::sqrt(1.0 - s.alpha_bar(k));
    const Tensor zero({2, 4});
    worst = std::max(worst, max_abs_diff(denoise_step_noise(xk, k, eps, s, zero),
                                         posterior_mean(x_theta, xk, k, s)));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Strided, Subschedules) {
  const auto s = DiffusionSchedule::cosine();
  EXPECT_EQ(strided_subschedule(s, 4), (std::vector<std::size_t>{100, 67, 34, 1}));
  EXPECT_EQ(strided_subschedule(s, 2), (std::vector<std::size_t>{100, 1}));
  EXPECT_EQ(strided_subschedule(s, 1), (std::vector<std::size_t>{100}));
  std::vector<std::size_t> all(100);
  for (std::size_t i = 0; i < 100; ++i) all[i] = 100 - i;
  EXPECT_EQ(strided_subschedule(s, 100), all);
  EXPECT_THROW(strided_subschedule(s, 101), Error);
  EXPECT_THROW(strided_subschedule(s, 0), Error);
}

TEST(Strided, ConsecutiveTransitionMatchesSingleStep) {
  const auto s = DiffusionSchedule::cosine();
  Rng rng(7);
  const Tensor x = Tensor::normal({1, 5}, rng), pred = Tensor::normal({1, 5}, rng),
               noise = Tensor::normal({1, 5}, rng);
  EXPECT_EQ(denoise_transition_data(x, 40, 39, pred, s, noise), denoise_step_data(x, 40, pred, s, noise));
}

TEST(Strided, OracleStridedChainReachesData) {
  const auto s = DiffusionSchedule::cosine();
  Rng rng(8);
  const Tensor x0 = Tensor::normal({2, 3}, rng);
  Tensor x = Tensor::normal({2, 3}, rng);
  const auto steps = strided_subschedule(s, 7);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::size_t to = i + 1 < steps.size() ? steps[i + 1] : 0;
    x = denoise_transition_data(x, steps[i], to, x0, s, Tensor({2, 3}));
  }
  EXPECT_LT(max_abs_diff(x, x0), 1e-12);
}
