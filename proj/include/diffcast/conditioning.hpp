#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "diffcast/data.hpp"
#include "diffcast/nn.hpp"
#include "diffcast/optim.hpp"

namespace diffcast {

// ---------------------------------------------------------------------------
// Conditioning network F: (batch, d, L) -> (batch, d, H)
// ---------------------------------------------------------------------------

struct CondNetConfig {
  std::size_t variables = 1;
  std::size_t lookback = 96;
  std::size_t horizon = 24;
  std::size_t width = 256;
  std::size_t blocks = 2;
  double negative_slope = 0.1;
  double dropout = 0.1;
};

/// Conv blocks over the lookback (d -> width -> width), a dense time
/// projection L -> H shared by every channel, then a width-1 convolution
/// width -> d. The output has no activation.
class CondNet {
 public:
  struct Cache {
    ConvStack::Cache blocks;
    Tensor features;   // (B, width, L)
    Tensor projected;  // (B, width, H)
  };

  CondNet() = default;
  CondNet(const CondNetConfig& config, Rng& rng);

  Tensor forward(const Tensor& lookback, Mode mode, Rng& rng, Cache* cache = nullptr);
  Tensor infer(const Tensor& lookback) const;
  /// Accumulates parameter gradients and returns d loss / d lookback.
  Tensor backward(const Cache& cache, const Tensor& upstream);

  void collect(std::vector<Param*>& out);
  void collect_buffers(std::vector<Buffer>& out) { blocks_.collect_buffers(out); }

  const CondNetConfig& config() const { return config_; }

 private:
  CondNetConfig config_;
  ConvStack blocks_;
  Dense time_projection_;
  Conv1d head_;
};

// ---------------------------------------------------------------------------
// Linear autoregressive initializer
// ---------------------------------------------------------------------------

/// z_ar = sum_i W_i (.) X_i + B, where X_i holds H copies of lookback column i.
/// weight is stored as (L, d, H) with slice i matching lookback column i
/// (oldest first); bias is (d, H).
class ArModel {
 public:
  ArModel() = default;
  ArModel(std::size_t variables, std::size_t lookback, std::size_t horizon);

  std::size_t variables() const { return bias.value.dim(0); }
  std::size_t lookback() const { return weight.value.dim(0); }
  std::size_t horizon() const { return bias.value.dim(1); }

  /// (d, L) -> (d, H), or batched (B, d, L) -> (B, d, H).
  Tensor forward(const Tensor& lookback) const;
  /// Accumulates gradients for a batched forward.
  void backward(const Tensor& lookback, const Tensor& upstream);

  void collect(std::vector<Param*>& out) { out.push_back(&weight); out.push_back(&bias); }

  Param weight;
  Param bias;
};

struct ArPretrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  AdamConfig adam{};
};

struct ArPretrainResult {
  ArModel model;
  /// Mean squared error over the whole training set after each epoch.
  std::vector<double> epoch_losses;
};

/// Least-squares fit of z_ar to the horizon targets with Adam, starting from
/// all-zero weights. Windows are shuffled each epoch with `seed`.
ArPretrainResult ar_pretrain(std::span<const SeriesWindow> windows, const ArPretrainOptions& options,
                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Future mixup
// ---------------------------------------------------------------------------

enum class MixStrategy { Soft, Hard, Segment };

std::string to_string(MixStrategy strategy);
MixStrategy parse_mix_strategy(const std::string& name);

struct MixupSpec {
  MixStrategy strategy = MixStrategy::Soft;
  double tau = 0.5;  // hard / segment only
};

struct MixMask {
  Tensor m;  // (d, H)
  MixupSpec spec;
};

/// soft: i.i.d. uniform [0, 1). hard: 1{u < tau}. segment: per row,
/// alternating runs of ones (geometric, mean 3) and zeros (geometric, mean
/// 3 (1 - tau) / tau, success probability clipped to 1) from a random phase.
MixMask sample_mask(const MixupSpec& spec, std::size_t variables, std::size_t horizon, Rng& rng);

/// z_mix = m (.) F(x) + (1 - m) (.) x_target
Tensor future_mixup_train(const Tensor& cond_out, const Tensor& target, const Tensor& mask);

/// Inference has no target: z_mix = F(x).
inline const Tensor& future_mixup_infer(const Tensor& cond_out) { return cond_out; }

// ---------------------------------------------------------------------------
// Condition tensor
// ---------------------------------------------------------------------------

struct Condition {
  Tensor z_mix;  // (d, H)
  Tensor z_ar;   // (d, H)
  Tensor c;      // (2d, H)
};

/// Channel concatenation: rows 0..d-1 are z_mix, rows d..2d-1 are z_ar.
Condition build_condition(const Tensor& z_mix, const Tensor& z_ar);

}  // namespace diffcast
