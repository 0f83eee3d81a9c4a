#include "diffcast/denoiser.hpp"

#include <cmath>

#include "diffcast/error.hpp"

namespace diffcast {

Tensor step_embedding_raw(std::size_t k, std::size_t dim) {
  require(dim >= 4 && dim % 2 == 0, ErrorKind::Config, "step embedding size must be even and >= 4");
  const std::size_t w = dim / 2;
  Tensor raw({dim});
  const double kk = static_cast<double>(k);
  for (std::size_t j = 0; j < w; ++j) {
    const double freq = std::pow(10.0, 4.0 * static_cast<double>(j) / static_cast<double>(w - 1));
    raw[j] = std::sin(freq * kk);
    raw[w + j] = std::cos(freq * kk);
  }
  return raw;
}

StepEmbedding::StepEmbedding(std::size_t dim, std::size_t hidden, Rng& rng)
    : first_("denoiser.embed.fc1", dim, hidden, rng), second_("denoiser.embed.fc2", hidden, dim, rng) {}

Tensor StepEmbedding::forward(std::span<const std::size_t> steps, Cache* cache) const {
  const std::size_t d = dim();
  Tensor raw({steps.size(), d});
  for (std::size_t b = 0; b < steps.size(); ++b) set_batch_item(raw, b, step_embedding_raw(steps[b], d));
  Tensor hidden_pre = first_.forward(raw);
  Tensor hidden = silu(hidden_pre);
  Tensor out_pre = second_.forward(hidden);
  Tensor out = silu(out_pre);
  if (cache) *cache = {std::move(raw), std::move(hidden_pre), std::move(hidden), std::move(out_pre)};
  return out;
}

void StepEmbedding::backward(const Cache& cache, const Tensor& upstream) {
  Tensor g = silu_backward(cache.out_pre, upstream);
  g = second_.backward(cache.hidden, g);
  g = silu_backward(cache.hidden_pre, g);
  first_.backward(cache.raw, g);
}

void StepEmbedding::collect(std::vector<Param*>& out) {
  first_.collect(out);
  second_.collect(out);
}

Tensor append_broadcast(const Tensor& z1, const Tensor& p) {
  require(z1.rank() == 3 && p.rank() == 2 && p.dim(0) == z1.dim(0), ErrorKind::Shape,
          "append_broadcast: " + shape_string(z1.shape()) + " and " + shape_string(p.shape()));
  const std::size_t batch = z1.dim(0), channels = p.dim(1), len = z1.dim(2);
  Tensor tiled({batch, channels, len});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t t = 0; t < len; ++t) tiled.at(b, c, t) = p.at(b, c);
    }
  }
  return concat_channels(z1, tiled);
}

Denoiser::Denoiser(const DenoiserConfig& config, Rng& rng)
    : config_(config),
      embedding_(config.width, config.embed_hidden, rng),
      projection_("denoiser.projection", config.variables, config.width, config.projection_blocks, rng,
                  config.negative_slope, config.dropout),
      encoder_("denoiser.encoder", 2 * config.width, config.width, config.encoder_blocks, rng,
               config.negative_slope, config.dropout),
      decoder_("denoiser.decoder", config.cond_channels + config.width, config.width,
               config.decoder_blocks, rng, config.negative_slope, config.dropout),
      output_("denoiser.output", config.width, config.variables, 3, rng) {
  require(config.projection_blocks >= 1 && config.encoder_blocks >= 1 && config.decoder_blocks >= 1,
          ErrorKind::Config, "denoiser stacks need at least one block each");
}

Tensor Denoiser::input_projection(const Tensor& xk, Mode mode, Rng& rng, ConvStack::Cache* cache) {
  require(xk.rank() == 3 && xk.dim(1) == config_.variables, ErrorKind::Shape,
          "denoiser: x^k must be (B, " + std::to_string(config_.variables) + ", H), got " +
              shape_string(xk.shape()));
  return projection_.forward(xk, mode, rng, cache);
}

Tensor Denoiser::encode(const Tensor& z1, const Tensor& p, Mode mode, Rng& rng,
                        ConvStack::Cache* cache) {
  require(z1.rank() == 3 && z1.dim(1) == config_.width && p.rank() == 2 && p.dim(1) == config_.width,
          ErrorKind::Shape, "denoiser encode: unexpected latent or embedding shape");
  return encoder_.forward(append_broadcast(z1, p), mode, rng, cache);
}

Tensor Denoiser::decode(const Tensor& c, const Tensor& z2, Mode mode, Rng& rng, Cache* cache) {
  require(c.rank() == 3 && c.dim(1) == config_.cond_channels && c.dim(0) == z2.dim(0) &&
              c.dim(2) == z2.dim(2),
          ErrorKind::Shape,
          "denoiser: condition must be (B, " + std::to_string(config_.cond_channels) +
              ", H) matching the latent, got " + shape_string(c.shape()));
  Tensor h = decoder_.forward(concat_channels(c, z2), mode, rng, cache ? &cache->decoder : nullptr);
  Tensor out = output_.forward(h);
  if (cache) cache->decoder_out = std::move(h);
  return out;
}

Tensor Denoiser::forward(const Tensor& xk, std::span<const std::size_t> steps, const Tensor& c,
                         Mode mode, Rng& rng, Cache* cache) {
  require(steps.size() == xk.dim(0), ErrorKind::Shape, "denoiser: need one diffusion step per batch item");
  const Tensor p = embedding_.forward(steps, cache ? &cache->embed : nullptr);
  const Tensor z1 = input_projection(xk, mode, rng, cache ? &cache->projection : nullptr);
  const Tensor z2 = encode(z1, p, mode, rng, cache ? &cache->encoder : nullptr);
  return decode(c, z2, mode, rng, cache);
}

Tensor Denoiser::infer(const Tensor& xk, std::span<const std::size_t> steps, const Tensor& c) const {
  require(steps.size() == xk.dim(0), ErrorKind::Shape, "denoiser: need one diffusion step per batch item");
  require(xk.rank() == 3 && xk.dim(1) == config_.variables, ErrorKind::Shape,
          "denoiser: x^k must be (B, " + std::to_string(config_.variables) + ", H), got " +
              shape_string(xk.shape()));
  require(c.rank() == 3 && c.dim(1) == config_.cond_channels && c.dim(0) == xk.dim(0) &&
              c.dim(2) == xk.dim(2),
          ErrorKind::Shape,
          "denoiser: condition must be (B, " + std::to_string(config_.cond_channels) +
              ", H) matching x^k, got " + shape_string(c.shape()));
  const Tensor p = embedding_.forward(steps);
  const Tensor z2 = encoder_.infer(append_broadcast(projection_.infer(xk), p));
  return output_.forward(decoder_.infer(concat_channels(c, z2)));
}

Tensor Denoiser::backward(const Cache& cache, const Tensor& upstream) {
  const std::size_t width = config_.width;
  Tensor g = output_.backward(cache.decoder_out, upstream);
  g = decoder_.backward(cache.decoder, g);
  Tensor grad_c = slice_channels(g, 0, config_.cond_channels);
  Tensor grad_z2 = slice_channels(g, config_.cond_channels, width);

  Tensor g_enc = encoder_.backward(cache.encoder, grad_z2);
  Tensor grad_z1 = slice_channels(g_enc, 0, width);
  const Tensor grad_tiled = slice_channels(g_enc, width, width);
  const std::size_t batch = grad_tiled.dim(0), len = grad_tiled.dim(2);
  Tensor grad_p({batch, width});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < width; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < len; ++t) s += grad_tiled.at(b, c, t);
      grad_p.at(b, c) = s;
    }
  }
  embedding_.backward(cache.embed, grad_p);
  projection_.backward(cache.projection, grad_z1);
  return grad_c;
}

void Denoiser::collect(std::vector<Param*>& out) {
  embedding_.collect(out);
  projection_.collect(out);
  encoder_.collect(out);
  decoder_.collect(out);
  output_.collect(out);
}

void Denoiser::collect_buffers(std::vector<Buffer>& out) {
  projection_.collect_buffers(out);
  encoder_.collect_buffers(out);
  decoder_.collect_buffers(out);
}

}  // namespace diffcast
