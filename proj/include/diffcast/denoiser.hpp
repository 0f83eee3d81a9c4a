#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "diffcast/nn.hpp"

namespace diffcast {

/// Raw sinusoidal embedding of diffusion step k with dim = 2w entries:
/// sin(10^{4j/(w-1)} k) for j = 0..w-1 followed by the matching cosines.
Tensor step_embedding_raw(std::size_t k, std::size_t dim);

/// raw sinusoid -> FC(dim -> hidden) -> SiLU -> FC(hidden -> dim) -> SiLU
class StepEmbedding {
 public:
  struct Cache {
    Tensor raw, hidden_pre, hidden, out_pre;
  };

  StepEmbedding() = default;
  StepEmbedding(std::size_t dim, std::size_t hidden, Rng& rng);

  std::size_t dim() const { return first_.in_dim(); }

  /// One row per entry of `steps`: (B, dim).
  Tensor forward(std::span<const std::size_t> steps, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const Tensor& upstream);

  void collect(std::vector<Param*>& out);

 private:
  Dense first_;
  Dense second_;
};

struct DenoiserConfig {
  std::size_t variables = 1;
  std::size_t cond_channels = 2;  // 2d with mixup + AR, d when one is dropped
  std::size_t width = 256;        // d' == d''
  std::size_t embed_hidden = 128;
  std::size_t projection_blocks = 2;
  std::size_t encoder_blocks = 3;
  std::size_t decoder_blocks = 3;
  double negative_slope = 0.1;
  double dropout = 0.1;
};

/// Broadcasts p (B, C) over the length of z1 (B, C', T) and appends it along
/// the channel axis: (B, C' + C, T).
Tensor append_broadcast(const Tensor& z1, const Tensor& p);

/// x_theta(x^k, k | c): input projection d -> d', encoder over [z1; p^k]
/// (2d' -> d''), decoder over [c; z2] ((cond + d'') -> d'') and a final plain
/// convolution d'' -> d. The same class serves as the noise-prediction head;
/// only the training target differs.
class Denoiser {
 public:
  struct Cache {
    StepEmbedding::Cache embed;
    ConvStack::Cache projection, encoder, decoder;
    Tensor decoder_out;
  };

  Denoiser() = default;
  Denoiser(const DenoiserConfig& config, Rng& rng);

  const DenoiserConfig& config() const { return config_; }

  Tensor embed(std::span<const std::size_t> steps) const { return embedding_.forward(steps); }
  /// (B, d, H) -> z1 (B, d', H)
  Tensor input_projection(const Tensor& xk, Mode mode, Rng& rng, ConvStack::Cache* cache = nullptr);
  /// z1 (B, d', H), p (B, d') -> z2 (B, d'', H)
  Tensor encode(const Tensor& z1, const Tensor& p, Mode mode, Rng& rng,
                ConvStack::Cache* cache = nullptr);
  /// c (B, cond, H), z2 (B, d'', H) -> (B, d, H)
  Tensor decode(const Tensor& c, const Tensor& z2, Mode mode, Rng& rng, Cache* cache = nullptr);

  Tensor forward(const Tensor& xk, std::span<const std::size_t> steps, const Tensor& c, Mode mode,
                 Rng& rng, Cache* cache = nullptr);
  /// Eval-mode forward that leaves every buffer untouched.
  Tensor infer(const Tensor& xk, std::span<const std::size_t> steps, const Tensor& c) const;
  /// Accumulates parameter gradients; returns d loss / d c.
  Tensor backward(const Cache& cache, const Tensor& upstream);

  void collect(std::vector<Param*>& out);
  void collect_buffers(std::vector<Buffer>& out);

 private:
  DenoiserConfig config_;
  StepEmbedding embedding_;
  ConvStack projection_;
  ConvStack encoder_;
  ConvStack decoder_;
  Conv1d output_;
};

}  // namespace diffcast
