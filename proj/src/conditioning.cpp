#include "diffcast/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "diffcast/error.hpp"

namespace diffcast {

CondNet::CondNet(const CondNetConfig& config, Rng& rng)
    : config_(config),
      blocks_("cond.blocks", config.variables, config.width, config.blocks, rng,
              config.negative_slope, config.dropout),
      time_projection_("cond.time_projection", config.lookback, config.horizon, rng),
      head_("cond.head", config.width, config.variables, 1, rng) {
  require(config.blocks >= 1, ErrorKind::Config, "conditioning network needs at least one block");
}

namespace {

void check_lookback(const CondNetConfig& config, const Tensor& lookback) {
  require(lookback.rank() == 3 && lookback.dim(1) == config.variables &&
              lookback.dim(2) == config.lookback,
          ErrorKind::Shape,
          "conditioning network: expected (B, " + std::to_string(config.variables) + ", " +
              std::to_string(config.lookback) + ") input, got " + shape_string(lookback.shape()));
}

}  // namespace

Tensor CondNet::infer(const Tensor& lookback) const {
  check_lookback(config_, lookback);
  const std::size_t batch = lookback.dim(0), width = config_.width;
  const Tensor features = blocks_.infer(lookback);
  return head_.forward(time_projection_.forward(features.reshaped({batch * width, config_.lookback}))
                           .reshaped({batch, width, config_.horizon}));
}

Tensor CondNet::forward(const Tensor& lookback, Mode mode, Rng& rng, Cache* cache) {
  check_lookback(config_, lookback);
  const std::size_t batch = lookback.dim(0), width = config_.width;
  Tensor features = blocks_.forward(lookback, mode, rng, cache ? &cache->blocks : nullptr);
  Tensor projected =
      time_projection_.forward(features.reshaped({batch * width, config_.lookback}))
          .reshaped({batch, width, config_.horizon});
  Tensor out = head_.forward(projected);
  if (cache) {
    cache->features = std::move(features);
    cache->projected = std::move(projected);
  }
  return out;
}

Tensor CondNet::backward(const Cache& cache, const Tensor& upstream) {
  const std::size_t batch = upstream.dim(0), width = config_.width;
  Tensor g = head_.backward(cache.projected, upstream);
  g = time_projection_.backward(cache.features.reshaped({batch * width, config_.lookback}),
                                g.reshaped({batch * width, config_.horizon}));
  return blocks_.backward(cache.blocks, g.reshaped({batch, width, config_.lookback}));
}

void CondNet::collect(std::vector<Param*>& out) {
  blocks_.collect(out);
  time_projection_.collect(out);
  head_.collect(out);
}

// ---------------------------------------------------------------------------

ArModel::ArModel(std::size_t variables, std::size_t lookback, std::size_t horizon)
    : weight("ar.weight", Tensor({lookback, variables, horizon})),
      bias("ar.bias", Tensor({variables, horizon})) {}

Tensor ArModel::forward(const Tensor& lookback) const {
  const std::size_t d = variables(), L = this->lookback(), H = horizon();
  const bool batched = lookback.rank() == 3;
  require((batched && lookback.dim(1) == d && lookback.dim(2) == L) ||
              (lookback.rank() == 2 && lookback.dim(0) == d && lookback.dim(1) == L),
          ErrorKind::Shape,
          "ar model: expected lookback (d=" + std::to_string(d) + ", L=" + std::to_string(L) +
              "), got " + shape_string(lookback.shape()));
  const std::size_t batch = batched ? lookback.dim(0) : 1;
  Tensor out(batched ? Shape{batch, d, H} : Shape{d, H});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      double* z = out.data() + (b * d + j) * H;
      const double* x = lookback.data() + (b * d + j) * L;
      std::copy_n(bias.value.data() + j * H, H, z);
      for (std::size_t i = 0; i < L; ++i) {
        const double* w = weight.value.data() + (i * d + j) * H;
        for (std::size_t h = 0; h < H; ++h) z[h] += w[h] * x[i];
      }
    }
  }
  return out;
}

void ArModel::backward(const Tensor& lookback, const Tensor& upstream) {
  const std::size_t d = variables(), L = this->lookback(), H = horizon();
  const std::size_t batch = lookback.dim(0);
  require_shape(upstream, {batch, d, H}, "ar model upstream gradient");
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      const double* g = upstream.data() + (b * d + j) * H;
      const double* x = lookback.data() + (b * d + j) * L;
      for (std::size_t h = 0; h < H; ++h) bias.grad[j * H + h] += g[h];
      for (std::size_t i = 0; i < L; ++i) {
        double* gw = weight.grad.data() + (i * d + j) * H;
        for (std::size_t h = 0; h < H; ++h) gw[h] += g[h] * x[i];
      }
    }
  }
}

namespace {

double ar_dataset_loss(const ArModel& model, std::span<const SeriesWindow> windows) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& w : windows) {
    const Tensor z = model.forward(w.lookback);
    for (std::size_t i = 0; i < z.size(); ++i) sum += (z[i] - w.target[i]) * (z[i] - w.target[i]);
    count += z.size();
  }
  return sum / static_cast<double>(count);
}

}  // namespace

ArPretrainResult ar_pretrain(std::span<const SeriesWindow> windows, const ArPretrainOptions& options,
                             std::uint64_t seed) {
  require(!windows.empty(), ErrorKind::Data, "ar pretraining needs at least one training window");
  require(options.batch_size >= 1, ErrorKind::Config, "ar pretraining batch size must be positive");
  const std::size_t d = windows[0].lookback.dim(0);
  const std::size_t L = windows[0].lookback.dim(1);
  const std::size_t H = windows[0].target.dim(1);

  ArPretrainResult result{ArModel(d, L, H), {}};
  ArModel& model = result.model;
  std::vector<Param*> params;
  model.collect(params);
  AdamState adam{options.adam, {}, {}, 0};
  Rng rng(seed);

  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::vector<Tensor> xs, ys;
      for (std::size_t i = start; i < end; ++i) {
        xs.push_back(windows[order[i]].lookback);
        ys.push_back(windows[order[i]].target);
      }
      const Tensor x = stack_batch(xs);
      const Tensor y = stack_batch(ys);
      Tensor g = model.forward(x) - y;
      g *= 2.0 / static_cast<double>(g.size());
      zero_grad(params);
      model.backward(x, g);
      adam_step(params, adam);
    }
    result.epoch_losses.push_back(ar_dataset_loss(model, windows));
  }
  return result;
}

// ---------------------------------------------------------------------------

std::string to_string(MixStrategy strategy) {
  switch (strategy) {
    case MixStrategy::Soft: return "soft";
    case MixStrategy::Hard: return "hard";
    case MixStrategy::Segment: return "segment";
  }
  return "unknown";
}

MixStrategy parse_mix_strategy(const std::string& name) {
  if (name == "soft") return MixStrategy::Soft;
  if (name == "hard") return MixStrategy::Hard;
  if (name == "segment") return MixStrategy::Segment;
  fail(ErrorKind::Config, "unknown mixup strategy '" + name + "'");
}

namespace {

// Run length >= 1 with mean 1 / p.
std::size_t geometric_run(double p, Rng& rng) {
  if (p >= 1.0) return 1;
  const double u = uniform01(rng);
  return 1 + static_cast<std::size_t>(std::floor(std::log1p(-u) / std::log1p(-p)));
}

}  // namespace

MixMask sample_mask(const MixupSpec& spec, std::size_t variables, std::size_t horizon, Rng& rng) {
  if (spec.strategy != MixStrategy::Soft) {
    require(spec.tau > 0.0 && spec.tau < 1.0, ErrorKind::Config, "mixup tau must lie in (0, 1)");
  }
  MixMask mask{Tensor({variables, horizon}), spec};
  Tensor& m = mask.m;
  switch (spec.strategy) {
    case MixStrategy::Soft:
      for (auto& v : m.values()) v = uniform01(rng);
      break;
    case MixStrategy::Hard:
      for (auto& v : m.values()) v = uniform01(rng) < spec.tau ? 1.0 : 0.0;
      break;
    case MixStrategy::Segment: {
      constexpr double kMaskedMean = 3.0;
      const double masked_p = 1.0 / kMaskedMean;
      const double unmasked_p = std::min(1.0, spec.tau / (kMaskedMean * (1.0 - spec.tau)));
      for (std::size_t j = 0; j < variables; ++j) {
        bool masked = uniform01(rng) < 0.5;
        std::size_t t = 0;
        while (t < horizon) {
          const std::size_t run = geometric_run(masked ? masked_p : unmasked_p, rng);
          for (std::size_t s = t; s < std::min(horizon, t + run); ++s) m.at(j, s) = masked ? 1.0 : 0.0;
          t += run;
          masked = !masked;
        }
      }
      break;
    }
  }
  return mask;
}

Tensor future_mixup_train(const Tensor& cond_out, const Tensor& target, const Tensor& mask) {
  require(cond_out.shape() == target.shape() && cond_out.shape() == mask.shape(), ErrorKind::Shape,
          "future mixup: shapes " + shape_string(cond_out.shape()) + ", " +
              shape_string(target.shape()) + ", " + shape_string(mask.shape()) + " differ");
  Tensor z = cond_out;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = mask[i] * cond_out[i] + (1.0 - mask[i]) * target[i];
  return z;
}

Condition build_condition(const Tensor& z_mix, const Tensor& z_ar) {
  require(z_mix.rank() == 2 && z_mix.shape() == z_ar.shape(), ErrorKind::Shape,
          "build_condition: z_mix " + shape_string(z_mix.shape()) + " and z_ar " +
              shape_string(z_ar.shape()) + " must both be (d, H)");
  const std::size_t d = z_mix.dim(0), H = z_mix.dim(1);
  Tensor c = concat_channels(z_mix.reshaped({1, d, H}), z_ar.reshaped({1, d, H})).reshaped({2 * d, H});
  return {z_mix, z_ar, std::move(c)};
}

}  // namespace diffcast
