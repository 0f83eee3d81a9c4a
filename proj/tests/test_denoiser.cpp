#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "diffcast/denoiser.hpp"
#include "diffcast/error.hpp"

using namespace diffcast;

namespace {

DenoiserConfig small_config() {
  DenoiserConfig c;
  c.variables = 2;
  c.cond_channels = 4;
  c.width = 8;
  c.embed_hidden = 6;
  return c;
}

}  // namespace

TEST(StepEmbedding, RawValues) {
  const Tensor zero = step_embedding_raw(0, 8);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(zero[j], 0.0);
    EXPECT_EQ(zero[4 + j], 1.0);
  }
  const Tensor five = step_embedding_raw(5, 8);
  for (std::size_t j = 0; j < 4; ++j) {
    const double freq = std::pow(10.0, 4.0 * static_cast<double>(j) / 3.0);
    EXPECT_NEAR(five[j], std::sin(freq * 5.0), 1e-9);
    EXPECT_NEAR(five[4 + j], std::cos(freq * 5.0), 1e-9);
  }
  EXPECT_THROW(step_embedding_raw(1, 7), Error);
}

TEST(StepEmbedding, DistinctStepsGiveDistinctRows) {
  Rng rng(1);
  const StepEmbedding e(16, 12, rng);
  std::vector<std::size_t> steps(100);
  for (std::size_t k = 0; k < 100; ++k) steps[k] = k + 1;
  const Tensor p = e.forward(steps);
  ASSERT_EQ(p.shape(), (Shape{100, 16}));
  for (std::size_t a = 0; a < 100; ++a)
    for (std::size_t b = a + 1; b < 100; ++b) {
      double diff = 0.0;
      for (std::size_t j = 0; j < 16; ++j) diff = std::max(diff, std::abs(p.at(a, j) - p.at(b, j)));
      EXPECT_GT(diff, 0.0) << a + 1 << " vs " << b + 1;
    }
}

TEST(Denoiser, Shapes) {
  Rng rng(2);
  Denoiser net(small_config(), rng);
  const Tensor xk = Tensor::normal({3, 2, 5}, rng);
  const Tensor c = Tensor::normal({3, 4, 5}, rng);
  const std::vector<std::size_t> steps{1, 50, 100};
  Rng drop(3);
  EXPECT_EQ(net.input_projection(xk, Mode::Eval, drop).shape(), (Shape{3, 8, 5}));
  EXPECT_EQ(net.forward(xk, steps, c, Mode::Train, drop).shape(), (Shape{3, 2, 5}));
  EXPECT_THROW(net.infer(xk, steps, Tensor({3, 3, 5})), Error);
  EXPECT_THROW(net.infer(xk, std::vector<std::size_t>{1, 2}, c), Error);
}

TEST(Denoiser, StepChangesOutput) {
  Rng rng(4);
  Denoiser net(small_config(), rng);
  const Tensor xk = Tensor::normal({1, 2, 6}, rng);
  const Tensor c = Tensor::normal({1, 4, 6}, rng);
  const Tensor a = net.infer(xk, std::vector<std::size_t>{1}, c);
  const Tensor b = net.infer(xk, std::vector<std::size_t>{100}, c);
  EXPECT_GT(max_abs_diff(a, b), 0.0);
}

TEST(Denoiser, InferMatchesEvalForwardAndLeavesBuffersAlone) {
  Rng rng(5);
  Denoiser net(small_config(), rng);
  const Tensor xk = Tensor::normal({2, 2, 6}, rng);
  const Tensor c = Tensor::normal({2, 4, 6}, rng);
  const std::vector<std::size_t> steps{3, 70};
  // A train pass moves the running statistics away from their defaults.
  Rng drop(6);
  net.forward(xk, steps, c, Mode::Train, drop);

  std::vector<Buffer> buffers;
  net.collect_buffers(buffers);
  std::vector<Tensor> before;
  for (const Buffer& b : buffers) before.push_back(*b.value);

  const Tensor inferred = net.infer(xk, steps, c);
  for (std::size_t i = 0; i < buffers.size(); ++i) EXPECT_EQ(*buffers[i].value, before[i]);
  EXPECT_EQ(inferred, net.forward(xk, steps, c, Mode::Eval, drop));
}

TEST(Denoiser, OutputBiasShiftsPrediction) {
  Rng rng(7);
  Denoiser net(small_config(), rng);
  std::vector<Param*> params;
  net.collect(params);
  for (Param* p : params) {
    if (p->name == "denoiser.output.bias") {
      p->value.fill(5.0);
    } else if (p->name == "denoiser.output.weight") {
      p->value.fill(0.0);
    }
  }
  const Tensor y = net.infer(Tensor::normal({1, 2, 4}, rng), std::vector<std::size_t>{10},
                             Tensor::normal({1, 4, 4}, rng));
  for (double v : y.values()) EXPECT_EQ(v, 5.0);
}

TEST(AppendBroadcast, CopiesAcrossLength) {
  const Tensor z({1, 1, 3}, {1.0, 2.0, 3.0});
  const Tensor p({1, 2}, {7.0, 8.0});
  EXPECT_EQ(append_broadcast(z, p), Tensor({1, 3, 3}, {1.0, 2.0, 3.0, 7.0, 7.0, 7.0, 8.0, 8.0, 8.0}));
  EXPECT_THROW(append_broadcast(z, Tensor({2, 2})), Error);
}
