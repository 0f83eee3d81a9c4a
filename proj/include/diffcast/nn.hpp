#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "diffcast/rng.hpp"
#include "diffcast/tensor.hpp"

namespace diffcast {

enum class Mode { Train, Eval };

/// A learnable tensor together with its accumulated gradient.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::like(value)) {}
};

/// Non-learnable state that still has to be checkpointed (batchnorm running stats).
struct Buffer {
  std::string name;
  Tensor* value;
};

void zero_grad(const std::vector<Param*>& params);

// ---------------------------------------------------------------------------
// Stateless kernels. All operate on (batch, channels, length) tensors unless
// noted; backward functions take the forward input and the upstream gradient.
// ---------------------------------------------------------------------------

/// Stride-1 convolution with zero padding (width - 1) / 2 on both ends, so the
/// output length equals the input length. kernel is (out, in, width), width odd.
Tensor conv1d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias);

struct Conv1dGrads {
  Tensor input;
  Tensor kernel;
  Tensor bias;
};

Conv1dGrads conv1d_backward(const Tensor& input, const Tensor& kernel, const Tensor& upstream);

/// y = x W^T + b for x of shape (batch, in) and W of shape (out, in).
Tensor dense_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

DenseGrads dense_backward(const Tensor& input, const Tensor& weight, const Tensor& upstream);

Tensor leaky_relu(const Tensor& x, double slope = 0.1);
Tensor leaky_relu_backward(const Tensor& x, const Tensor& upstream, double slope = 0.1);
double leaky_relu(double x, double slope = 0.1);

double silu(double x);
Tensor silu(const Tensor& x);
Tensor silu_backward(const Tensor& x, const Tensor& upstream);

/// Inverted dropout. In train mode each element survives with probability
/// 1 - rate and survivors are scaled by 1 / (1 - rate); `mask` receives the
/// per-element multiplier. Eval mode is the identity and leaves `mask` empty.
Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng, Tensor* mask = nullptr);

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, std::size_t in_channels, std::size_t out_channels,
         std::size_t width, Rng& rng);

  std::size_t in_channels() const { return weight.value.dim(1); }
  std::size_t out_channels() const { return weight.value.dim(0); }

  Tensor forward(const Tensor& x) const { return conv1d_forward(x, weight.value, bias.value); }
  /// Accumulates parameter gradients; returns the input gradient.
  Tensor backward(const Tensor& x, const Tensor& upstream);

  void collect(std::vector<Param*>& out) { out.push_back(&weight); out.push_back(&bias); }

  Param weight;
  Param bias;
};

class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, std::size_t in_dim, std::size_t out_dim, Rng& rng);

  std::size_t in_dim() const { return weight.value.dim(1); }
  std::size_t out_dim() const { return weight.value.dim(0); }

  Tensor forward(const Tensor& x) const { return dense_forward(x, weight.value, bias.value); }
  Tensor backward(const Tensor& x, const Tensor& upstream);

  void collect(std::vector<Param*>& out) { out.push_back(&weight); out.push_back(&bias); }

  Param weight;
  Param bias;
};

struct BatchNormCache {
  Mode mode = Mode::Eval;
  Tensor normalized;               // x_hat
  std::vector<double> inv_std;     // per channel
};

/// Per-channel normalization over (batch, length).
class BatchNorm1d {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEpsilon = 1e-5;

  BatchNorm1d() = default;
  BatchNorm1d(const std::string& name, std::size_t channels);

  /// Train mode normalizes with batch statistics and folds them into the
  /// running estimates; eval mode uses the running estimates only.
  Tensor forward(const Tensor& x, Mode mode, BatchNormCache* cache = nullptr);
  /// Eval-mode forward; never touches the running estimates.
  Tensor infer(const Tensor& x) const;
  Tensor backward(const BatchNormCache& cache, const Tensor& upstream);

  void collect(std::vector<Param*>& out) { out.push_back(&gain); out.push_back(&bias); }
  void collect_buffers(std::vector<Buffer>& out);

  Param gain;
  Param bias;
  Tensor running_mean;
  Tensor running_var;
  std::string name;
};

/// conv -> batchnorm -> leaky relu -> dropout.
class ConvBlock {
 public:
  struct Cache {
    Tensor input;
    BatchNormCache norm;
    Tensor activation_input;
    Tensor dropout_mask;
  };

  ConvBlock() = default;
  ConvBlock(const std::string& name, std::size_t in_channels, std::size_t out_channels, Rng& rng,
            double negative_slope = 0.1, double dropout_rate = 0.1);

  Tensor forward(const Tensor& x, Mode mode, Rng& rng, Cache* cache = nullptr);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Cache& cache, const Tensor& upstream);

  void collect(std::vector<Param*>& out);
  void collect_buffers(std::vector<Buffer>& out) { norm.collect_buffers(out); }

  Conv1d conv;
  BatchNorm1d norm;
  double negative_slope = 0.1;
  double dropout_rate = 0.1;
};

/// A chain of conv blocks: in -> width -> width -> ...
class ConvStack {
 public:
  using Cache = std::vector<ConvBlock::Cache>;

  ConvStack() = default;
  ConvStack(const std::string& name, std::size_t in_channels, std::size_t width,
            std::size_t blocks, Rng& rng, double negative_slope, double dropout_rate);

  Tensor forward(const Tensor& x, Mode mode, Rng& rng, Cache* cache = nullptr);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Cache& cache, const Tensor& upstream);

  void collect(std::vector<Param*>& out);
  void collect_buffers(std::vector<Buffer>& out);

  std::vector<ConvBlock> blocks;
};

}  // namespace diffcast
