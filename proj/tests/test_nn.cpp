#include <gtest/gtest.h>

#include <cmath>

#include "diffcast/error.hpp"
#include "diffcast/gradcheck.hpp"
#include "diffcast/nn.hpp"
#include "diffcast/optim.hpp"
#include "oracles.hpp"

using namespace diffcast;

namespace {

Tensor row3(double a, double b, double c) { return Tensor({1, 1, 3}, {a, b, c}); }

double weighted_sum(const Tensor& out, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
  return s;
}

}  // namespace

TEST(Conv1d, IdentityKernel) {
  const Tensor y = conv1d_forward(row3(1, 2, 3), Tensor({1, 1, 3}, {0, 1, 0}), Tensor({1}));
  EXPECT_EQ(y, row3(1, 2, 3));
}

TEST(Conv1d, OnesKernelWithZeroPadding) {
  const Tensor y = conv1d_forward(row3(1, 2, 3), Tensor({1, 1, 3}, {1, 1, 1}), Tensor({1}));
  EXPECT_EQ(y, row3(3, 6, 5));
}

TEST(Conv1d, ZeroInputGivesBias) {
  Rng rng(3);
  const Tensor k = Tensor::normal({4, 2, 3}, rng);
  const Tensor b({4}, {0.5, -1.0, 2.0, 7.0});
  const Tensor y = conv1d_forward(Tensor({2, 2, 5}), k, b);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 4; ++o)
      for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(y.at(n, o, t), b[o]);
}

TEST(Conv1d, MatchesNaiveOracle) {
  Rng rng(5);
  const Tensor x = Tensor::normal({3, 4, 9}, rng);
  const Tensor k = Tensor::normal({5, 4, 3}, rng);
  const Tensor b = Tensor::normal({5}, rng);
  const Tensor y = conv1d_forward(x, k, b);
  const auto ref = oracle::conv1d(x.storage(), 3, 4, 9, k.storage(), 5, 3, b.storage());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Conv1d, ShapeErrors) {
  EXPECT_THROW(conv1d_forward(Tensor({1, 2, 3}), Tensor({1, 1, 3}), Tensor({1})), Error);
  EXPECT_THROW(conv1d_forward(Tensor({1, 1, 3}), Tensor({1, 1, 2}), Tensor({1})), Error);
}

TEST(Conv1dBackward, ZeroUpstream) {
  Rng rng(1);
  const Tensor x = Tensor::normal({2, 2, 4}, rng);
  const Tensor k = Tensor::normal({3, 2, 3}, rng);
  const Conv1dGrads g = conv1d_backward(x, k, Tensor({2, 3, 4}));
  EXPECT_EQ(squared_norm(g.input) + squared_norm(g.kernel) + squared_norm(g.bias), 0.0);
}

TEST(Conv1dBackward, IdentityKernelPassesGradient) {
  Rng rng(2);
  const Tensor up = Tensor::normal({1, 1, 6}, rng);
  const Conv1dGrads g = conv1d_backward(Tensor::normal({1, 1, 6}, rng), Tensor({1, 1, 3}, {0, 1, 0}), up);
  EXPECT_EQ(g.input, up);
}

TEST(Conv1dBackward, FiniteDifferences) {
  Rng rng(7);
  Tensor x = Tensor::normal({2, 2, 3}, rng);
  Tensor k = Tensor::normal({2, 2, 3}, rng);
  Tensor b = Tensor::normal({2}, rng);
  const Tensor r = Tensor::normal({2, 2, 3}, rng);
  const Conv1dGrads g = conv1d_backward(x, k, r);
  auto loss = [&] { return weighted_sum(conv1d_forward(x, k, b), r); };
  EXPECT_LT(finite_diff_check(loss, x.values(), g.input.values(), 12, rng).max_relative_error, 1e-5);
  EXPECT_LT(finite_diff_check(loss, k.values(), g.kernel.values(), 12, rng).max_relative_error, 1e-5);
  EXPECT_LT(finite_diff_check(loss, b.values(), g.bias.values(), 2, rng).max_relative_error, 1e-5);
}

TEST(Dense, HandProduct) {
  const Tensor y = dense_forward(Tensor({1, 2}, {1, 1}), Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2}));
  EXPECT_EQ(y, Tensor({1, 2}, {3, 7}));
}

TEST(Dense, IdentityAndBias) {
  const Tensor x({2, 3}, {1, -2, 3, 4, 5, -6});
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  EXPECT_EQ(dense_forward(x, eye, Tensor({3})), x);
  const Tensor b({3}, {1.5, 2.5, 3.5});
  EXPECT_EQ(dense_forward(x, Tensor({3, 3}), b), Tensor({2, 3}, {1.5, 2.5, 3.5, 1.5, 2.5, 3.5}));
}

TEST(BatchNorm, TrainModeStandardizes) {
  Rng rng(4);
  BatchNorm1d bn("bn", 3);
  Tensor x = Tensor::normal({4, 3, 16}, rng);
  x *= 3.0;
  const Tensor y = bn.forward(x, Mode::Train);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t t = 0; t < 16; ++t) mean += y.at(n, c, t);
    mean /= 64.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t t = 0; t < 16; ++t) var += (y.at(n, c, t) - mean) * (y.at(n, c, t) - mean);
    var /= 64.0;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-5);
  }
}

TEST(BatchNorm, AffineOnStandardizedInput) {
  BatchNorm1d bn("bn", 1);
  bn.gain.value[0] = 2.0;
  bn.bias.value[0] = 3.0;
  const Tensor x({1, 1, 4}, {-1, -1, 1, 1});  // mean 0, population variance 1
  const Tensor y = bn.forward(x, Mode::Train);
  const double scale = 1.0 / std::sqrt(1.0 + BatchNorm1d::kEpsilon);
  for (std::size_t t = 0; t < 4; ++t) EXPECT_NEAR(y[t], 2.0 * x[t] * scale + 3.0, 1e-12);
}

TEST(BatchNorm, ConstantChannelGivesBias) {
  BatchNorm1d bn("bn", 1);
  bn.bias.value[0] = 0.25;
  const Tensor y = bn.forward(Tensor({2, 1, 5}, 4.0), Mode::Train);
  for (double v : y.values()) EXPECT_EQ(v, 0.25);
}

TEST(BatchNorm, RunningStatisticsUseUnbiasedVariance) {
  BatchNorm1d bn("bn", 1);
  bn.forward(Tensor({1, 1, 4}, {1, 2, 3, 4}), Mode::Train);
  EXPECT_NEAR(bn.running_mean[0], 0.1 * 2.5, 1e-15);
  EXPECT_NEAR(bn.running_var[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-15);
}

TEST(BatchNorm, InferMatchesEvalForward) {
  Rng rng(9);
  BatchNorm1d bn("bn", 2);
  bn.forward(Tensor::normal({3, 2, 5}, rng), Mode::Train);
  const Tensor x = Tensor::normal({2, 2, 5}, rng);
  const Tensor before = bn.running_var;
  EXPECT_EQ(bn.infer(x), bn.forward(x, Mode::Eval));
  EXPECT_EQ(bn.running_var, before);
}

TEST(Activations, Values) {
  EXPECT_EQ(leaky_relu(-10.0, 0.1), -1.0);
  EXPECT_EQ(leaky_relu(2.0, 0.1), 2.0);
  EXPECT_EQ(silu(0.0), 0.0);
  EXPECT_NEAR(silu(1.0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Dropout, EvalIsIdentity) {
  Rng rng(1);
  const Tensor x = Tensor::normal({2, 3, 4}, rng);
  Tensor mask;
  EXPECT_EQ(dropout(x, 0.5, Mode::Eval, rng, &mask), x);
  EXPECT_TRUE(mask.empty());
}

TEST(Dropout, TrainKeepsExpectation) {
  Rng rng(2);
  const Tensor x({1, 1, 100000}, 1.0);
  Tensor mask;
  const Tensor y = dropout(x, 0.1, Mode::Train, rng, &mask);
  double mean = 0.0;
  for (double v : y.values()) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.9) < 1e-15);
    mean += v;
  }
  EXPECT_NEAR(mean / 100000.0, 1.0, 0.01);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Param p("p", Tensor({3}, {1, 2, 3}));
  AdamState state;
  adam_step({&p}, state);
  EXPECT_EQ(p.value, Tensor({3}, {1, 2, 3}));
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  Param p("p", Tensor({2}, {0.0, 0.0}));
  p.grad = Tensor({2}, {0.3, -2.0});
  AdamState state;
  adam_step({&p}, state);
  // m_hat = g, v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps).
  EXPECT_NEAR(p.value[0], -1e-3 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value[1], 1e-3 * 2.0 / (2.0 + 1e-8), 1e-15);
}

TEST(Adam, MonotoneUnderConstantGradient) {
  Param p("p", Tensor({1}, {1.0}));
  AdamState state;
  double last = 1.0;
  for (int i = 0; i < 2; ++i) {
    p.grad = Tensor({1}, {0.5});
    adam_step({&p}, state);
    EXPECT_LT(p.value[0], last);
    last = p.value[0];
  }
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Param p("layer.weight", Tensor({2}, {1.0, 1.0}));
  p.grad = Tensor({2}, {0.0, std::nan("")});
  AdamState state;
  try {
    adam_step({&p}, state);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Numeric);
    EXPECT_NE(std::string(e.what()).find("layer.weight"), std::string::npos);
  }
  EXPECT_EQ(p.value, Tensor({2}, {1.0, 1.0}));
}

TEST(GradCheck, LinearMapIsExact) {
  Rng rng(11);
  Tensor x = Tensor::normal({4, 6}, rng);
  Tensor w = Tensor::normal({3, 6}, rng);
  const Tensor r = Tensor::normal({4, 3}, rng);
  const DenseGrads g = dense_backward(x, w, r);
  auto loss = [&] { return weighted_sum(dense_forward(x, w, Tensor({3})), r); };
  EXPECT_LT(finite_diff_check(loss, w.values(), g.weight.values(), 18, rng).max_relative_error, 1e-9);
}

TEST(GradCheck, ConvBlockWithActivations) {
  Rng rng(12);
  ConvBlock block("b", 2, 3, rng, 0.1, 0.0);
  Tensor x = Tensor::normal({2, 2, 6}, rng);
  const Tensor r = Tensor::normal({2, 3, 6}, rng);
  std::vector<Param*> params;
  block.collect(params);
  ConvBlock::Cache cache;
  block.forward(x, Mode::Train, rng, &cache);
  const Tensor gx = block.backward(cache, r);
  auto loss = [&] { return weighted_sum(block.forward(x, Mode::Train, rng), r); };
  EXPECT_LT(finite_diff_check(loss, x.values(), gx.values(), 12, rng).max_relative_error, 1e-4);
  EXPECT_LT(finite_diff_check(loss, block.conv.weight.value.values(), block.conv.weight.grad.values(), 12, rng)
                .max_relative_error,
            1e-4);
}

TEST(GradCheck, DoubledGradientIsFlagged) {
  Rng rng(13);
  Tensor x = Tensor::normal({2, 5}, rng);
  Tensor w = Tensor::normal({3, 5}, rng);
  const Tensor r = Tensor::normal({2, 3}, rng);
  Tensor wrong = dense_backward(x, w, r).weight;
  wrong *= 2.0;
  auto loss = [&] { return weighted_sum(dense_forward(x, w, Tensor({3})), r); };
  // |2g - g| / |2g| = 1/2
  EXPECT_GE(finite_diff_check(loss, w.values(), wrong.values(), 10, rng).max_relative_error, 1.0 / 3.0);
}

TEST(GradCheck, ProbesAreDistinctAndSeeded) {
  std::vector<double> values(20, 0.0), analytic(20, 1.0);
  auto loss = [&] {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  };
  Rng a(5), b(5);
  const auto ra = finite_diff_check(loss, std::span<double>(values), analytic, 10, a);
  const auto rb = finite_diff_check(loss, std::span<double>(values), analytic, 10, b);
  EXPECT_EQ(ra.probes, 10u);
  EXPECT_EQ(ra.worst_index, rb.worst_index);
  EXPECT_LT(ra.max_relative_error, 1e-9);
}
