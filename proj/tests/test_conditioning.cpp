#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "diffcast/conditioning.hpp"
#include "diffcast/error.hpp"

using namespace diffcast;

namespace {

CondNetConfig small_cond() {
  CondNetConfig c;
  c.variables = 2;
  c.lookback = 8;
  c.horizon = 4;
  c.width = 6;
  return c;
}

std::vector<SeriesWindow> constant_windows(double v, std::size_t count, std::size_t L, std::size_t H) {
  std::vector<SeriesWindow> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back({Tensor({1, L}, v), Tensor({1, H}, v), i});
  return out;
}

}  // namespace

TEST(CondNet, OutputShape) {
  Rng rng(1);
  CondNet net(small_cond(), rng);
  const Tensor y = net.infer(Tensor::normal({3, 2, 8}, rng));
  EXPECT_EQ(y.shape(), (Shape{3, 2, 4}));
  EXPECT_THROW(net.infer(Tensor({3, 2, 7})), Error);
  EXPECT_THROW(net.infer(Tensor({3, 1, 8})), Error);
}

TEST(CondNet, ZeroInputIsFiniteAndDeterministic) {
  Rng rng(2);
  CondNet net(small_cond(), rng);
  const Tensor zero({1, 2, 8});
  const Tensor a = net.infer(zero);
  EXPECT_TRUE(a.all_finite());
  EXPECT_EQ(a, net.infer(zero));
  Rng other(99);
  EXPECT_EQ(a, net.forward(zero, Mode::Eval, other));
}

TEST(Mask, SoftMoments) {
  Rng rng(3);
  double sum = 0.0;
  std::size_t n = 0;
  for (int i = 0; i < 100; ++i) {
    const MixMask m = sample_mask({MixStrategy::Soft, 0.5}, 4, 25, rng);
    for (double v : m.m.values()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LT(v, 1.0);
      sum += v;
      ++n;
    }
  }
  EXPECT_EQ(n, 10000u);
  EXPECT_NEAR(sum / static_cast<double>(n), 0.5, 0.02);
}

TEST(Mask, HardIsBinaryAndFollowsThreshold) {
  Rng rng(4);
  const MixMask m = sample_mask({MixStrategy::Hard, 0.999}, 10, 100, rng);
  std::size_t ones = 0;
  for (double v : m.m.values()) {
    ASSERT_TRUE(v == 0.0 || v == 1.0);
    ones += v == 1.0;
  }
  EXPECT_GE(ones, 990u);
  const MixMask low = sample_mask({MixStrategy::Hard, 0.001}, 10, 100, rng);
  EXPECT_LE(std::count(low.m.values().begin(), low.m.values().end(), 1.0), 10);
}

TEST(Mask, SegmentRunLengths) {
  Rng rng(5);
  // 1000 rows x 100 columns = 1e5 cells. Runs cut by the row edge are dropped.
  const MixMask m = sample_mask({MixStrategy::Segment, 0.5}, 1000, 100, rng);
  std::size_t zero_runs = 0, zero_cells = 0, one_runs = 0, one_cells = 0;
  for (std::size_t r = 0; r < 1000; ++r) {
    std::size_t t = 0;
    while (t < 100) {
      const double v = m.m.at(r, t);
      ASSERT_TRUE(v == 0.0 || v == 1.0);
      std::size_t e = t;
      while (e < 100 && m.m.at(r, e) == v) ++e;
      if (t > 0 && e < 100) {
        (v == 0.0 ? zero_runs : one_runs) += 1;
        (v == 0.0 ? zero_cells : one_cells) += e - t;
      }
      t = e;
    }
  }
  EXPECT_NEAR(static_cast<double>(zero_cells) / static_cast<double>(zero_runs), 3.0, 0.1);
  EXPECT_NEAR(static_cast<double>(one_cells) / static_cast<double>(one_runs), 3.0, 0.1);
}

TEST(Mask, SegmentLargeTauClipsZeroRuns) {
  Rng rng(6);
  // 3 (1 - tau) / tau < 1 for tau = 0.9: every zero run has length one.
  const MixMask m = sample_mask({MixStrategy::Segment, 0.9}, 200, 50, rng);
  for (std::size_t r = 0; r < 200; ++r)
    for (std::size_t t = 1; t < 50; ++t) EXPECT_FALSE(m.m.at(r, t) == 0.0 && m.m.at(r, t - 1) == 0.0);
}

TEST(Mask, RejectsInvalidTau) {
  Rng rng(7);
  EXPECT_THROW(sample_mask({MixStrategy::Hard, 0.0}, 1, 4, rng), Error);
  EXPECT_THROW(sample_mask({MixStrategy::Segment, 1.0}, 1, 4, rng), Error);
  EXPECT_THROW(parse_mix_strategy("blend"), Error);
  EXPECT_EQ(parse_mix_strategy(to_string(MixStrategy::Segment)), MixStrategy::Segment);
}

TEST(Mixup, Limits) {
  const Tensor f({1, 3}, 2.0), x({1, 3}, 4.0);
  EXPECT_EQ(future_mixup_train(f, x, Tensor({1, 3}, 0.0)), x);
  EXPECT_EQ(future_mixup_train(f, x, Tensor({1, 3}, 1.0)), f);
  EXPECT_EQ(future_mixup_train(f, x, Tensor({1, 3}, 0.5)), Tensor({1, 3}, 3.0));
  EXPECT_EQ(&future_mixup_infer(f), &f);
  EXPECT_THROW(future_mixup_train(f, Tensor({1, 2}), Tensor({1, 3})), Error);
}

TEST(Mixup, SoftMaskStaysBetweenInputs) {
  Rng rng(8);
  const Tensor f = Tensor::normal({3, 10}, rng), x = Tensor::normal({3, 10}, rng);
  const MixMask m = sample_mask({}, 3, 10, rng);
  const Tensor z = future_mixup_train(f, x, m.m);
  for (std::size_t i = 0; i < z.size(); ++i) {
    EXPECT_GE(z[i], std::min(f[i], x[i]) - 1e-15);
    EXPECT_LE(z[i], std::max(f[i], x[i]) + 1e-15);
  }
}

TEST(ArModel, HandExamples) {
  ArModel ar(1, 2, 2);
  ar.weight.value = Tensor({2, 1, 2}, {1.0, 0.0, 0.0, 1.0});
  EXPECT_EQ(ar.forward(Tensor({1, 2}, {2.0, 3.0})), Tensor({1, 2}, {2.0, 3.0}));

  ArModel bias_only(2, 3, 4);
  bias_only.bias.value = Tensor({2, 4}, 0.25);
  EXPECT_EQ(bias_only.forward(Tensor({2, 3}, 9.0)), Tensor({2, 4}, 0.25));

  ArModel last(2, 1, 3);
  last.weight.value.fill(1.0);
  EXPECT_EQ(last.forward(Tensor({2, 1}, {5.0, -1.0})), Tensor({2, 3}, {5.0, 5.0, 5.0, -1.0, -1.0, -1.0}));
  EXPECT_THROW(last.forward(Tensor({2, 2})), Error);
}

TEST(ArModel, AffineInLookback) {
  Rng rng(9);
  ArModel ar(2, 5, 3);
  ar.weight.value = Tensor::normal(ar.weight.value.shape(), rng);
  ar.bias.value = Tensor::normal(ar.bias.value.shape(), rng);
  const Tensor x = Tensor::normal({2, 5}, rng), y = Tensor::normal({2, 5}, rng);
  const double a = 0.7, b = -1.3;
  const Tensor lhs = ar.forward(a * x + b * y);
  const Tensor rhs = a * ar.forward(x) + b * ar.forward(y) - (a + b - 1.0) * ar.bias.value;
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
}

TEST(ArPretrain, ConstantSeriesReachesZeroLoss) {
  ArPretrainOptions opt;
  opt.batch_size = 1;
  const auto windows = constant_windows(0.5, 10, 8, 4);
  const ArPretrainResult r = ar_pretrain(windows, opt, 1);
  ASSERT_EQ(r.epoch_losses.size(), 20u);
  EXPECT_LT(r.epoch_losses.back(), 1e-4);
}

TEST(ArPretrain, Deterministic) {
  std::vector<SeriesWindow> windows;
  Rng rng(10);
  for (std::size_t i = 0; i < 12; ++i) windows.push_back({Tensor::normal({2, 6}, rng), Tensor::normal({2, 3}, rng), i});
  ArPretrainOptions opt;
  opt.batch_size = 4;
  const auto a = ar_pretrain(windows, opt, 7), b = ar_pretrain(windows, opt, 7);
  EXPECT_EQ(a.model.weight.value, b.model.weight.value);
  EXPECT_EQ(a.model.bias.value, b.model.bias.value);
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
}

TEST(ArPretrain, MonotoneOnLinearTrend) {
  std::vector<SeriesWindow> windows;
  for (std::size_t s = 0; s < 16; ++s) {
    Tensor lb({1, 6}), tg({1, 3});
    for (std::size_t t = 0; t < 6; ++t) lb[t] = 0.01 * static_cast<double>(s + t);
    for (std::size_t t = 0; t < 3; ++t) tg[t] = 0.01 * static_cast<double>(s + 6 + t);
    windows.push_back({lb, tg, s});
  }
  ArPretrainOptions opt;
  opt.batch_size = 16;
  const auto r = ar_pretrain(windows, opt, 3);
  for (std::size_t e = 1; e < r.epoch_losses.size(); ++e)
    EXPECT_LE(r.epoch_losses[e], r.epoch_losses[e - 1] + 1e-6) << "epoch " << e;
  EXPECT_LT(r.epoch_losses.back(), r.epoch_losses.front());
}

TEST(ArPretrain, RejectsEmptySet) {
  EXPECT_THROW(ar_pretrain({}, {}, 0), Error);
}

TEST(BuildCondition, Concatenates) {
  const Condition c = build_condition(Tensor({1, 2}, {1.0, 2.0}), Tensor({1, 2}, {3.0, 4.0}));
  EXPECT_EQ(c.c, Tensor({2, 2}, {1.0, 2.0, 3.0, 4.0}));

  Rng rng(11);
  const Tensor a = Tensor::normal({3, 5}, rng), b = Tensor::normal({3, 5}, rng);
  const Condition big = build_condition(a, b);
  EXPECT_EQ(big.c.shape(), (Shape{6, 5}));
  const Tensor batched = big.c.reshaped({1, 6, 5});
  EXPECT_EQ(slice_channels(batched, 0, 3).reshaped({3, 5}), a);
  EXPECT_EQ(slice_channels(batched, 3, 3).reshaped({3, 5}), b);
  EXPECT_THROW(build_condition(a, Tensor({2, 5})), Error);
}
