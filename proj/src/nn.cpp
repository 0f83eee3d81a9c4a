#include "diffcast/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "diffcast/error.hpp"

namespace diffcast {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
  return t;
}

void check_conv_shapes(const Tensor& input, const Tensor& kernel) {
  require(kernel.rank() == 3 && kernel.dim(2) % 2 == 1, ErrorKind::Shape,
          "conv1d: kernel must be (out, in, odd width), got " + shape_string(kernel.shape()));
  require(input.rank() == 3 && input.dim(1) == kernel.dim(1) && input.dim(2) >= 1,
          ErrorKind::Shape,
          "conv1d: input " + shape_string(input.shape()) + " incompatible with kernel " +
              shape_string(kernel.shape()));
}

// (in * width, count * length) patch matrix with zero padding for batch items
// [first, first + count).
RowMatrix im2col(const Tensor& input, std::size_t width, std::size_t first, std::size_t count) {
  const std::size_t channels = input.dim(1), len = input.dim(2);
  const auto pad = static_cast<std::ptrdiff_t>(width / 2);
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(channels * width),
                                   static_cast<Eigen::Index>(count * len));
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t w = 0; w < width; ++w) {
      double* row = cols.data() + (c * width + w) * count * len;
      const auto shift = static_cast<std::ptrdiff_t>(w) - pad;
      for (std::size_t n = 0; n < count; ++n) {
        const double* src = input.data() + ((first + n) * channels + c) * len;
        double* dst = row + n * len;
        for (std::size_t t = 0; t < len; ++t) {
          const auto s = static_cast<std::ptrdiff_t>(t) + shift;
          if (s >= 0 && s < static_cast<std::ptrdiff_t>(len)) dst[t] = src[s];
        }
      }
    }
  }
  return cols;
}

RowMatrix im2col(const Tensor& input, std::size_t width) { return im2col(input, width, 0, input.dim(0)); }

// Forward GEMMs run over groups of whole batch items with about this many
// columns, which keeps the patch matrix cache-resident for long inputs.
constexpr std::size_t kForwardTileColumns = 512;

}  // namespace

void zero_grad(const std::vector<Param*>& params) {
  for (Param* p : params) p->grad.fill(0.0);
}

Tensor conv1d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  check_conv_shapes(input, kernel);
  const std::size_t out_ch = kernel.dim(0), in_ch = kernel.dim(1), width = kernel.dim(2);
  require_shape(bias, {out_ch}, "conv1d bias");
  const std::size_t batch = input.dim(0), len = input.dim(2);

  ConstMatrixMap w(kernel.data(), static_cast<Eigen::Index>(out_ch),
                   static_cast<Eigen::Index>(in_ch * width));
  const std::size_t tile = std::max<std::size_t>(1, kForwardTileColumns / std::max<std::size_t>(len, 1));

  Tensor out({batch, out_ch, len});
  for (std::size_t first = 0; first < batch; first += tile) {
    const std::size_t count = std::min(tile, batch - first);
    const RowMatrix product = w * im2col(input, width, first, count);
    for (std::size_t n = 0; n < count; ++n) {
      for (std::size_t o = 0; o < out_ch; ++o) {
        const double* src = product.data() + (o * count + n) * len;
        double* dst = out.data() + ((first + n) * out_ch + o) * len;
        for (std::size_t t = 0; t < len; ++t) dst[t] = src[t] + bias[o];
      }
    }
  }
  return out;
}

Conv1dGrads conv1d_backward(const Tensor& input, const Tensor& kernel, const Tensor& upstream) {
  check_conv_shapes(input, kernel);
  const std::size_t out_ch = kernel.dim(0), in_ch = kernel.dim(1), width = kernel.dim(2);
  const std::size_t batch = input.dim(0), len = input.dim(2);
  require_shape(upstream, {batch, out_ch, len}, "conv1d upstream gradient");

  RowMatrix g(static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(batch * len));
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      std::copy_n(upstream.data() + (n * out_ch + o) * len, len,
                  g.data() + o * batch * len + n * len);
    }
  }

  Conv1dGrads grads{Tensor::like(input), Tensor::like(kernel), Tensor({out_ch})};
  const RowMatrix cols = im2col(input, width);
  MatrixMap gk(grads.kernel.data(), static_cast<Eigen::Index>(out_ch),
               static_cast<Eigen::Index>(in_ch * width));
  gk.noalias() = g * cols.transpose();
  for (std::size_t o = 0; o < out_ch; ++o) grads.bias[o] = g.row(static_cast<Eigen::Index>(o)).sum();

  ConstMatrixMap w(kernel.data(), static_cast<Eigen::Index>(out_ch),
                   static_cast<Eigen::Index>(in_ch * width));
  const RowMatrix gcols = w.transpose() * g;
  const auto pad = static_cast<std::ptrdiff_t>(width / 2);
  for (std::size_t c = 0; c < in_ch; ++c) {
    for (std::size_t k = 0; k < width; ++k) {
      const double* row = gcols.data() + (c * width + k) * batch * len;
      const auto shift = static_cast<std::ptrdiff_t>(k) - pad;
      for (std::size_t n = 0; n < batch; ++n) {
        double* dst = grads.input.data() + (n * in_ch + c) * len;
        const double* src = row + n * len;
        for (std::size_t t = 0; t < len; ++t) {
          const auto s = static_cast<std::ptrdiff_t>(t) + shift;
          if (s >= 0 && s < static_cast<std::ptrdiff_t>(len)) dst[s] += src[t];
        }
      }
    }
  }
  return grads;
}

Tensor dense_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require(weight.rank() == 2, ErrorKind::Shape, "dense: weight must be a matrix");
  require(input.rank() == 2 && input.dim(1) == weight.dim(1), ErrorKind::Shape,
          "dense: input " + shape_string(input.shape()) + " incompatible with weight " +
              shape_string(weight.shape()));
  require_shape(bias, {weight.dim(0)}, "dense bias");
  const auto rows = static_cast<Eigen::Index>(input.dim(0));
  const auto in = static_cast<Eigen::Index>(weight.dim(1));
  const auto outd = static_cast<Eigen::Index>(weight.dim(0));
  Tensor out({input.dim(0), weight.dim(0)});
  MatrixMap y(out.data(), rows, outd);
  y.noalias() = ConstMatrixMap(input.data(), rows, in) * ConstMatrixMap(weight.data(), outd, in).transpose();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index o = 0; o < outd; ++o) y(r, o) += bias[static_cast<std::size_t>(o)];
  }
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weight, const Tensor& upstream) {
  require(input.rank() == 2 && weight.rank() == 2 && input.dim(1) == weight.dim(1),
          ErrorKind::Shape, "dense backward: shape mismatch");
  require_shape(upstream, {input.dim(0), weight.dim(0)}, "dense upstream gradient");
  const auto rows = static_cast<Eigen::Index>(input.dim(0));
  const auto in = static_cast<Eigen::Index>(weight.dim(1));
  const auto outd = static_cast<Eigen::Index>(weight.dim(0));
  DenseGrads grads{Tensor::like(input), Tensor::like(weight), Tensor({weight.dim(0)})};
  ConstMatrixMap g(upstream.data(), rows, outd);
  MatrixMap(grads.weight.data(), outd, in).noalias() = g.transpose() * ConstMatrixMap(input.data(), rows, in);
  MatrixMap(grads.input.data(), rows, in).noalias() = g * ConstMatrixMap(weight.data(), outd, in);
  for (Eigen::Index o = 0; o < outd; ++o) grads.bias[static_cast<std::size_t>(o)] = g.col(o).sum();
  return grads;
}

double leaky_relu(double x, double slope) { return x >= 0.0 ? x : slope * x; }

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor y = x;
  for (auto& v : y.values()) v = leaky_relu(v, slope);
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& upstream, double slope) {
  require(x.shape() == upstream.shape(), ErrorKind::Shape, "leaky_relu backward: shape mismatch");
  Tensor g = upstream;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (x[i] < 0.0) g[i] *= slope;
  }
  return g;
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

Tensor silu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = silu(v);
  return y;
}

Tensor silu_backward(const Tensor& x, const Tensor& upstream) {
  require(x.shape() == upstream.shape(), ErrorKind::Shape, "silu backward: shape mismatch");
  Tensor g = upstream;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x[i]));
    g[i] *= s * (1.0 + x[i] * (1.0 - s));
  }
  return g;
}

Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng, Tensor* mask) {
  require(rate >= 0.0 && rate < 1.0, ErrorKind::Config, "dropout rate must lie in [0, 1)");
  if (mode == Mode::Eval || rate == 0.0) {
    if (mask) *mask = Tensor();
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor m = Tensor::like(x);
  for (auto& v : m.values()) v = uniform01(rng) < rate ? 0.0 : keep_scale;
  Tensor y = hadamard(x, m);
  if (mask) *mask = std::move(m);
  return y;
}

// ---------------------------------------------------------------------------

Conv1d::Conv1d(const std::string& name, std::size_t in_channels, std::size_t out_channels,
               std::size_t width, Rng& rng)
    : weight(name + ".weight",
             uniform_init({out_channels, in_channels, width}, in_channels * width, rng)),
      bias(name + ".bias", Tensor({out_channels})) {}

Tensor Conv1d::backward(const Tensor& x, const Tensor& upstream) {
  Conv1dGrads g = conv1d_backward(x, weight.value, upstream);
  weight.grad += g.kernel;
  bias.grad += g.bias;
  return std::move(g.input);
}

Dense::Dense(const std::string& name, std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : weight(name + ".weight", uniform_init({out_dim, in_dim}, in_dim, rng)),
      bias(name + ".bias", Tensor({out_dim})) {}

Tensor Dense::backward(const Tensor& x, const Tensor& upstream) {
  DenseGrads g = dense_backward(x, weight.value, upstream);
  weight.grad += g.weight;
  bias.grad += g.bias;
  return std::move(g.input);
}

BatchNorm1d::BatchNorm1d(const std::string& n, std::size_t channels)
    : gain(n + ".gain", Tensor({channels}, 1.0)),
      bias(n + ".bias", Tensor({channels})),
      running_mean({channels}, 0.0),
      running_var({channels}, 1.0),
      name(n) {}

void BatchNorm1d::collect_buffers(std::vector<Buffer>& out) {
  out.push_back({name + ".running_mean", &running_mean});
  out.push_back({name + ".running_var", &running_var});
}

Tensor BatchNorm1d::forward(const Tensor& x, Mode mode, BatchNormCache* cache) {
  const std::size_t channels = gain.value.size();
  require(x.rank() == 3 && x.dim(1) == channels, ErrorKind::Shape,
          "batchnorm: input " + shape_string(x.shape()) + " does not have " +
              std::to_string(channels) + " channels");
  const std::size_t batch = x.dim(0), len = x.dim(2);
  const std::size_t count = batch * len;
  if (mode == Mode::Train) {
    require(count >= 2, ErrorKind::Shape, "batchnorm: train mode needs at least 2 samples per channel");
  }

  Tensor normalized = Tensor::like(x);
  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0.0, var = 0.0;
    if (mode == Mode::Train) {
      for (std::size_t n = 0; n < batch; ++n) {
        const double* row = x.data() + (n * channels + c) * len;
        for (std::size_t t = 0; t < len; ++t) mean += row[t];
      }
      mean /= static_cast<double>(count);
      for (std::size_t n = 0; n < batch; ++n) {
        const double* row = x.data() + (n * channels + c) * len;
        for (std::size_t t = 0; t < len; ++t) var += (row[t] - mean) * (row[t] - mean);
      }
      var /= static_cast<double>(count);
      const double unbiased = var * static_cast<double>(count) / static_cast<double>(count - 1);
      running_mean[c] = (1.0 - kMomentum) * running_mean[c] + kMomentum * mean;
      running_var[c] = (1.0 - kMomentum) * running_var[c] + kMomentum * unbiased;
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + kEpsilon);
    for (std::size_t n = 0; n < batch; ++n) {
      const double* src = x.data() + (n * channels + c) * len;
      double* dst = normalized.data() + (n * channels + c) * len;
      for (std::size_t t = 0; t < len; ++t) dst[t] = (src[t] - mean) * inv_std[c];
    }
  }

  Tensor y = normalized;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      double* row = y.data() + (n * channels + c) * len;
      for (std::size_t t = 0; t < len; ++t) row[t] = gain.value[c] * row[t] + bias.value[c];
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor BatchNorm1d::infer(const Tensor& x) const {
  const std::size_t channels = gain.value.size();
  require(x.rank() == 3 && x.dim(1) == channels, ErrorKind::Shape,
          "batchnorm: input " + shape_string(x.shape()) + " does not have " +
              std::to_string(channels) + " channels");
  const std::size_t batch = x.dim(0), len = x.dim(2);
  Tensor y = x;
  for (std::size_t c = 0; c < channels; ++c) {
    const double inv_std = 1.0 / std::sqrt(running_var[c] + kEpsilon);
    for (std::size_t n = 0; n < batch; ++n) {
      double* row = y.data() + (n * channels + c) * len;
      for (std::size_t t = 0; t < len; ++t) {
        row[t] = gain.value[c] * ((row[t] - running_mean[c]) * inv_std) + bias.value[c];
      }
    }
  }
  return y;
}

Tensor BatchNorm1d::backward(const BatchNormCache& cache, const Tensor& upstream) {
  const Tensor& xh = cache.normalized;
  require(xh.shape() == upstream.shape(), ErrorKind::Shape, "batchnorm backward: shape mismatch");
  const std::size_t batch = xh.dim(0), channels = xh.dim(1), len = xh.dim(2);
  const double count = static_cast<double>(batch * len);
  Tensor grad_in = Tensor::like(upstream);
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels + c) * len;
      for (std::size_t t = 0; t < len; ++t) {
        sum_g += upstream[base + t];
        sum_gx += upstream[base + t] * xh[base + t];
      }
    }
    bias.grad[c] += sum_g;
    gain.grad[c] += sum_gx;
    const double scale = gain.value[c] * cache.inv_std[c];
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels + c) * len;
      for (std::size_t t = 0; t < len; ++t) {
        const double g = upstream[base + t];
        grad_in[base + t] = cache.mode == Mode::Train
                                ? scale * (g - sum_g / count - xh[base + t] * sum_gx / count)
                                : scale * g;
      }
    }
  }
  return grad_in;
}

ConvBlock::ConvBlock(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                     Rng& rng, double slope, double rate)
    : conv(name + ".conv", in_channels, out_channels, 3, rng),
      norm(name + ".norm", out_channels),
      negative_slope(slope),
      dropout_rate(rate) {}

Tensor ConvBlock::forward(const Tensor& x, Mode mode, Rng& rng, Cache* cache) {
  Tensor h = conv.forward(x);
  Tensor normed = norm.forward(h, mode, cache ? &cache->norm : nullptr);
  Tensor act = leaky_relu(normed, negative_slope);
  Tensor out = dropout(act, dropout_rate, mode, rng, cache ? &cache->dropout_mask : nullptr);
  if (cache) {
    cache->input = x;
    cache->activation_input = std::move(normed);
  }
  return out;
}

Tensor ConvBlock::infer(const Tensor& x) const {
  return leaky_relu(norm.infer(conv.forward(x)), negative_slope);
}

Tensor ConvBlock::backward(const Cache& cache, const Tensor& upstream) {
  Tensor g = cache.dropout_mask.empty() ? upstream : hadamard(upstream, cache.dropout_mask);
  g = leaky_relu_backward(cache.activation_input, g, negative_slope);
  g = norm.backward(cache.norm, g);
  return conv.backward(cache.input, g);
}

void ConvBlock::collect(std::vector<Param*>& out) {
  conv.collect(out);
  norm.collect(out);
}

ConvStack::ConvStack(const std::string& name, std::size_t in_channels, std::size_t width,
                     std::size_t count, Rng& rng, double slope, double rate) {
  for (std::size_t i = 0; i < count; ++i) {
    blocks.emplace_back(name + "." + std::to_string(i), i == 0 ? in_channels : width, width, rng,
                        slope, rate);
  }
}

Tensor ConvStack::forward(const Tensor& x, Mode mode, Rng& rng, Cache* cache) {
  if (cache) cache->assign(blocks.size(), {});
  Tensor h = x;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    h = blocks[i].forward(h, mode, rng, cache ? &(*cache)[i] : nullptr);
  }
  return h;
}

Tensor ConvStack::infer(const Tensor& x) const {
  Tensor h = x;
  for (const auto& b : blocks) h = b.infer(h);
  return h;
}

Tensor ConvStack::backward(const Cache& cache, const Tensor& upstream) {
  Tensor g = upstream;
  for (std::size_t i = blocks.size(); i-- > 0;) g = blocks[i].backward(cache[i], g);
  return g;
}

void ConvStack::collect(std::vector<Param*>& out) {
  for (auto& b : blocks) b.collect(out);
}

void ConvStack::collect_buffers(std::vector<Buffer>& out) {
  for (auto& b : blocks) b.collect_buffers(out);
}

}  // namespace diffcast
