#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "diffcast/conditioning.hpp"
#include "diffcast/data.hpp"
#include "diffcast/denoiser.hpp"
#include "diffcast/optim.hpp"
#include "diffcast/schedule.hpp"

namespace diffcast {

// ---------------------------------------------------------------------------
// Instance normalization
// ---------------------------------------------------------------------------

inline constexpr double kStdFloor = 1e-5;

/// Per-variable mean and population standard deviation of a lookback window.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

NormStats lookback_stats(const Tensor& lookback);

/// Applies (x - mean) / std row by row to a (d, T) tensor.
Tensor apply_normalization(const Tensor& x, const NormStats& stats);
/// Inverse of apply_normalization.
Tensor denormalize(const Tensor& x, const NormStats& stats);

struct NormalizedWindow {
  SeriesWindow window;
  NormStats stats;
};

/// Both halves of the window are scaled with statistics of the lookback only.
NormalizedWindow instance_normalize(const SeriesWindow& window);
SeriesWindow denormalize(const NormalizedWindow& normalized);

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Head { Data, Noise };

std::string to_string(Head head);
Head parse_head(const std::string& name);

struct ModelConfig {
  std::size_t variables = 1;
  std::size_t lookback = 96;
  std::size_t horizon = 24;
  std::size_t diffusion_steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.1;
  std::size_t width = 256;
  std::size_t embed_hidden = 128;
  double dropout = 0.1;
  bool use_mixup = true;
  MixupSpec mixup{};
  bool use_ar = true;
  Head head = Head::Data;

  std::size_t cond_channels() const { return use_ar ? 2 * variables : variables; }
  /// Throws ErrorKind::Config on the first invalid field.
  void validate() const;
};

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  double learning_rate = 1e-3;
  std::size_t patience = 10;
  std::size_t ar_epochs = 20;
  std::size_t samples = 10;
  std::size_t sampler_steps = 0;        // test forecasts; 0 means the full schedule
  std::size_t valid_sampler_steps = 0;  // per-epoch validation; 0 means the full schedule
  std::size_t valid_stride = 1;
  std::size_t eval_stride = 1;
  std::uint64_t seed = 0;

  void validate(const ModelConfig& model) const;
};

// ---------------------------------------------------------------------------
// Model bundle
// ---------------------------------------------------------------------------

struct TimeDiffModel {
  TimeDiffModel() = default;
  TimeDiffModel(const ModelConfig& config, std::uint64_t seed);

  /// Conditioning network and denoiser, in a fixed order (the AR model is frozen).
  std::vector<Param*> trainable();
  /// trainable() followed by the AR parameters.
  std::vector<Param*> parameters();
  std::vector<Buffer> buffers();

  ModelConfig config;
  DiffusionSchedule schedule;
  CondNet cond;
  ArModel ar;
  Denoiser denoiser;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Everything random about one training step except dropout.
struct TrainingDraw {
  std::vector<std::size_t> steps;  // one k per window
  Tensor lookback;                 // (B, d, L)
  Tensor x0;                       // (B, d, H)
  Tensor noise;                    // (B, d, H)
  Tensor xk;                       // (B, d, H)
  Tensor mask;                     // (B, d, H), empty without mixup
};

/// Draws k, epsilon and the mixup mask for every window (in that order per
/// window) and diffuses the targets. Windows must already be normalized.
TrainingDraw draw_training_batch(const TimeDiffModel& model, std::span<const SeriesWindow> batch,
                                 Rng& rng);

/// Lets tests replace the network output before the loss is taken.
using PredictionOverride = std::function<void(Tensor& prediction, const TrainingDraw& draw)>;

/// Mean squared error between the head output and its target (x^0 for the
/// data head, epsilon for the noise head). With `backward` set, gradients are
/// accumulated into the conditioning network and denoiser.
double training_loss(TimeDiffModel& model, const TrainingDraw& draw, Mode mode, Rng& dropout_rng,
                     bool backward, const PredictionOverride& override_prediction = {});

/// x^{k-1} for every window given the network prediction. Not needed for the
/// loss; only used when debugging a training step.
Tensor debug_previous_state(const TimeDiffModel& model, const TrainingDraw& draw,
                            const Tensor& prediction, Rng& rng);

/// One Adam update on a normalized batch. Throws ErrorKind::Numeric naming
/// `batch_index` if the loss is not finite.
double train_step(TimeDiffModel& model, std::span<const SeriesWindow> batch, AdamState& adam,
                  Rng& rng, std::size_t batch_index = 0);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_mse = 0.0;
};

struct Checkpoint {
  TrainConfig train_config;
  TimeDiffModel model;
  AdamState adam;
  std::vector<double> ar_losses;
  std::vector<EpochRecord> history;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_validation = std::numeric_limits<double>::infinity();
  bool trained = false;
};

/// Called after every epoch; useful for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// AR pretraining followed by the epoch loop with early stopping on the
/// validation MSE. Windows are raw; normalization happens here. Returns the
/// parameters of the best validation epoch along with the full history.
Checkpoint train_loop(std::span<const SeriesWindow> train, std::span<const SeriesWindow> valid,
                      const ModelConfig& model_config, const TrainConfig& train_config,
                      const EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

struct SamplerOptions {
  std::size_t steps = 0;     // 0 means every step of the schedule
  double start_noise = 1.0;  // scale of x^K
  double step_noise = 1.0;   // scale of the sigma term
};

/// Returns the head output (x^0 or epsilon estimate) for x at step k.
using Predictor = std::function<Tensor(const Tensor& x, std::size_t k)>;

/// Reverse chain over a (B, d, H) state. Item b draws its start and step
/// noise from rngs[b] only, so results do not depend on batch composition.
Tensor run_sampler(const DiffusionSchedule& schedule, Head head, const Predictor& predict,
                   const Shape& shape, const SamplerOptions& options, std::span<Rng> rngs);

/// Condition tensor for normalized lookbacks (B, d, L), eval mode.
Tensor inference_condition(const TimeDiffModel& model, const Tensor& lookback);

/// The trained denoiser as a predictor for a fixed condition. Both arguments
/// are held by reference and must outlive the predictor.
Predictor model_predictor(const TimeDiffModel& model, const Tensor& condition);

struct ForecastOptions {
  std::size_t samples = 10;
  SamplerOptions sampler{};
  std::size_t threads = 0;  // 0 reads DIFFCAST_THREADS, falling back to the core count
  std::size_t chunk = 32;   // windows per sampler batch; fixed so results ignore threads
};

/// Thread count from DIFFCAST_THREADS or the hardware.
std::size_t evaluation_threads();

/// Mean of `samples` draws per normalized lookback. Window i uses seeds
/// derived from (seed, i) only.
std::vector<Tensor> sample_normalized(const TimeDiffModel& model, std::span<const Tensor> lookbacks,
                                      const ForecastOptions& options, std::uint64_t seed);

/// Forecasts for raw lookbacks, denormalized. Refuses untrained checkpoints.
std::vector<Tensor> forecast(const Checkpoint& checkpoint, std::span<const Tensor> lookbacks,
                             const ForecastOptions& options, std::uint64_t seed);

double mse_eval(const Tensor& forecast, const Tensor& target);
double mse_eval(std::span<const Tensor> forecasts, std::span<const Tensor> targets);

struct EvalResult {
  double mse = 0.0;
  std::vector<double> window_mse;
  std::vector<Tensor> forecasts;
};

/// Test-style evaluation: forecasts from lookbacks only, then MSE against the
/// stored targets on the original scale.
EvalResult evaluate_windows(const Checkpoint& checkpoint, std::span<const SeriesWindow> windows,
                            const ForecastOptions& options, std::uint64_t seed);

}  // namespace diffcast
