#include "diffcast/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <thread>

#include "diffcast/error.hpp"

namespace diffcast {

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

NormStats lookback_stats(const Tensor& lookback) {
  require(lookback.rank() == 2 && lookback.dim(1) >= 1, ErrorKind::Shape,
          "normalization needs a (d, L) lookback with L >= 1, got " + shape_string(lookback.shape()));
  const std::size_t d = lookback.dim(0), L = lookback.dim(1);
  NormStats stats{std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t j = 0; j < d; ++j) {
    const double* row = lookback.data() + j * L;
    double mean = 0.0;
    for (std::size_t t = 0; t < L; ++t) mean += row[t];
    mean /= static_cast<double>(L);
    double var = 0.0;
    for (std::size_t t = 0; t < L; ++t) var += (row[t] - mean) * (row[t] - mean);
    var /= static_cast<double>(L);
    stats.mean[j] = mean;
    stats.std[j] = std::max(std::sqrt(var), kStdFloor);
  }
  return stats;
}

Tensor apply_normalization(const Tensor& x, const NormStats& stats) {
  require(x.rank() == 2 && x.dim(0) == stats.mean.size(), ErrorKind::Shape,
          "normalization: tensor " + shape_string(x.shape()) + " does not match the statistics");
  Tensor out = x;
  const std::size_t T = x.dim(1);
  for (std::size_t j = 0; j < x.dim(0); ++j) {
    for (std::size_t t = 0; t < T; ++t) out[j * T + t] = (x[j * T + t] - stats.mean[j]) / stats.std[j];
  }
  return out;
}

Tensor denormalize(const Tensor& x, const NormStats& stats) {
  require(x.rank() == 2 && x.dim(0) == stats.mean.size(), ErrorKind::Shape,
          "denormalize: tensor " + shape_string(x.shape()) + " does not match the statistics");
  Tensor out = x;
  const std::size_t T = x.dim(1);
  for (std::size_t j = 0; j < x.dim(0); ++j) {
    for (std::size_t t = 0; t < T; ++t) out[j * T + t] = x[j * T + t] * stats.std[j] + stats.mean[j];
  }
  return out;
}

NormalizedWindow instance_normalize(const SeriesWindow& window) {
  NormalizedWindow out;
  out.stats = lookback_stats(window.lookback);
  out.window.lookback = apply_normalization(window.lookback, out.stats);
  out.window.target = apply_normalization(window.target, out.stats);
  out.window.origin = window.origin;
  return out;
}

SeriesWindow denormalize(const NormalizedWindow& normalized) {
  return {denormalize(normalized.window.lookback, normalized.stats),
          denormalize(normalized.window.target, normalized.stats), normalized.window.origin};
}

namespace {

std::vector<SeriesWindow> normalize_all(std::span<const SeriesWindow> windows) {
  std::vector<SeriesWindow> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(instance_normalize(w).window);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

std::string to_string(Head head) { return head == Head::Data ? "data" : "noise"; }

Head parse_head(const std::string& name) {
  if (name == "data") return Head::Data;
  if (name == "noise") return Head::Noise;
  fail(ErrorKind::Config, "unknown head '" + name + "' (expected data or noise)");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    require(v > 0, ErrorKind::Config, std::string(what) + " must be positive");
  };
  positive(variables, "variables");
  positive(lookback, "lookback");
  positive(horizon, "horizon");
  positive(width, "width");
  positive(embed_hidden, "embed_hidden");
  require(diffusion_steps >= 2, ErrorKind::Config, "diffusion_steps must be at least 2");
  require(width >= 4 && width % 2 == 0, ErrorKind::Config, "width must be even and at least 4");
  require(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0, ErrorKind::Config,
          "betas must satisfy 0 < beta_start < beta_end < 1");
  require(dropout >= 0.0 && dropout < 1.0, ErrorKind::Config, "dropout must lie in [0, 1)");
  if (use_mixup && mixup.strategy != MixStrategy::Soft) {
    require(mixup.tau > 0.0 && mixup.tau < 1.0, ErrorKind::Config, "tau must lie in (0, 1)");
  }
}

void TrainConfig::validate(const ModelConfig& model) const {
  require(batch_size >= 1, ErrorKind::Config, "batch_size must be positive");
  require(max_epochs >= 1, ErrorKind::Config, "max_epochs must be positive");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::Config,
          "learning_rate must be positive");
  require(patience >= 1, ErrorKind::Config, "patience must be positive");
  require(samples >= 1, ErrorKind::Config, "samples must be positive");
  require(sampler_steps <= model.diffusion_steps && valid_sampler_steps <= model.diffusion_steps,
          ErrorKind::Config, "sampler steps cannot exceed diffusion_steps");
  require(valid_stride >= 1 && eval_stride >= 1, ErrorKind::Config, "strides must be positive");
  if (model.use_ar) require(ar_epochs >= 1, ErrorKind::Config, "ar_epochs must be positive");
}

// ---------------------------------------------------------------------------
// Model bundle
// ---------------------------------------------------------------------------

TimeDiffModel::TimeDiffModel(const ModelConfig& cfg, std::uint64_t seed)
    : config(cfg), schedule(DiffusionSchedule::cosine(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)),
      ar(cfg.variables, cfg.lookback, cfg.horizon) {
  cfg.validate();
  Rng rng = child_rng(seed, 0);
  cond = CondNet(CondNetConfig{cfg.variables, cfg.lookback, cfg.horizon, cfg.width, 2, 0.1, cfg.dropout},
                 rng);
  DenoiserConfig dc;
  dc.variables = cfg.variables;
  dc.cond_channels = cfg.cond_channels();
  dc.width = cfg.width;
  dc.embed_hidden = cfg.embed_hidden;
  dc.dropout = cfg.dropout;
  denoiser = Denoiser(dc, rng);
}

std::vector<Param*> TimeDiffModel::trainable() {
  std::vector<Param*> out;
  cond.collect(out);
  denoiser.collect(out);
  return out;
}

std::vector<Param*> TimeDiffModel::parameters() {
  std::vector<Param*> out = trainable();
  ar.collect(out);
  return out;
}

std::vector<Buffer> TimeDiffModel::buffers() {
  std::vector<Buffer> out;
  cond.collect_buffers(out);
  denoiser.collect_buffers(out);
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainingDraw draw_training_batch(const TimeDiffModel& model, std::span<const SeriesWindow> batch,
                                 Rng& rng) {
  require(!batch.empty(), ErrorKind::Data, "training batch is empty");
  const ModelConfig& cfg = model.config;
  const std::size_t B = batch.size(), d = cfg.variables, L = cfg.lookback, H = cfg.horizon;
  TrainingDraw draw;
  draw.steps.resize(B);
  draw.lookback = Tensor({B, d, L});
  draw.x0 = Tensor({B, d, H});
  draw.noise = Tensor({B, d, H});
  draw.xk = Tensor({B, d, H});
  if (cfg.use_mixup) draw.mask = Tensor({B, d, H});

  std::uniform_int_distribution<std::size_t> pick_step(1, model.schedule.steps());
  for (std::size_t b = 0; b < B; ++b) {
    const SeriesWindow& w = batch[b];
    require_shape(w.lookback, {d, L}, "training lookback");
    require_shape(w.target, {d, H}, "training target");
    const std::size_t k = pick_step(rng);
    const Tensor eps = Tensor::normal({d, H}, rng);
    draw.steps[b] = k;
    set_batch_item(draw.lookback, b, w.lookback);
    set_batch_item(draw.x0, b, w.target);
    set_batch_item(draw.noise, b, eps);
    set_batch_item(draw.xk, b, forward_sample(w.target, k, model.schedule, eps));
    if (cfg.use_mixup) set_batch_item(draw.mask, b, sample_mask(cfg.mixup, d, H, rng).m);
  }
  return draw;
}

double training_loss(TimeDiffModel& model, const TrainingDraw& draw, Mode mode, Rng& dropout_rng,
                     bool backward, const PredictionOverride& override_prediction) {
  const ModelConfig& cfg = model.config;
  const std::size_t d = cfg.variables;

  CondNet::Cache cond_cache;
  const Tensor f = model.cond.forward(draw.lookback, mode, dropout_rng, backward ? &cond_cache : nullptr);
  Tensor c = cfg.use_mixup ? future_mixup_train(f, draw.x0, draw.mask) : f;
  if (cfg.use_ar) c = concat_channels(c, model.ar.forward(draw.lookback));

  Denoiser::Cache cache;
  Tensor prediction =
      model.denoiser.forward(draw.xk, draw.steps, c, mode, dropout_rng, backward ? &cache : nullptr);
  if (override_prediction) override_prediction(prediction, draw);

  const Tensor& target = cfg.head == Head::Data ? draw.x0 : draw.noise;
  Tensor diff = prediction - target;
  const double loss = squared_norm(diff) / static_cast<double>(diff.size());
  if (!backward) return loss;

  diff *= 2.0 / static_cast<double>(diff.size());
  const Tensor grad_c = model.denoiser.backward(cache, diff);
  Tensor grad_f = cfg.use_ar ? slice_channels(grad_c, 0, d) : grad_c;
  if (cfg.use_mixup) grad_f = hadamard(grad_f, draw.mask);
  model.cond.backward(cond_cache, grad_f);
  return loss;
}

Tensor debug_previous_state(const TimeDiffModel& model, const TrainingDraw& draw,
                            const Tensor& prediction, Rng& rng) {
  require(prediction.shape() == draw.xk.shape(), ErrorKind::Shape,
          "debug_previous_state: prediction shape mismatch");
  Tensor out = Tensor::like(draw.xk);
  for (std::size_t b = 0; b < draw.steps.size(); ++b) {
    const Tensor xk = batch_item(draw.xk, b);
    const Tensor noise = Tensor::normal(xk.shape(), rng);
    const Tensor pred = batch_item(prediction, b);
    const std::size_t k = draw.steps[b];
    set_batch_item(out, b,
                   model.config.head == Head::Data
                       ? denoise_step_data(xk, k, pred, model.schedule, noise)
                       : denoise_step_noise(xk, k, pred, model.schedule, noise));
  }
  return out;
}

double train_step(TimeDiffModel& model, std::span<const SeriesWindow> batch, AdamState& adam, Rng& rng,
                  std::size_t batch_index) {
  const TrainingDraw draw = draw_training_batch(model, batch, rng);
  const std::vector<Param*> params = model.trainable();
  zero_grad(params);
  const double loss = training_loss(model, draw, Mode::Train, rng, true);
  require(std::isfinite(loss), ErrorKind::Numeric,
          "non-finite training loss in batch " + std::to_string(batch_index));
  adam_step(params, adam);
  return loss;
}

namespace {

double normalized_validation(const TimeDiffModel& model, std::span<const SeriesWindow> valid,
                             std::size_t sampler_steps, std::uint64_t seed) {
  std::vector<Tensor> lookbacks, targets;
  for (const auto& w : valid) {
    lookbacks.push_back(w.lookback);
    targets.push_back(w.target);
  }
  ForecastOptions options;
  options.samples = 1;
  options.sampler.steps = sampler_steps;
  return mse_eval(sample_normalized(model, lookbacks, options, seed), targets);
}

}  // namespace

Checkpoint train_loop(std::span<const SeriesWindow> train, std::span<const SeriesWindow> valid,
                      const ModelConfig& model_config, const TrainConfig& train_config,
                      const EpochCallback& on_epoch) {
  model_config.validate();
  train_config.validate(model_config);
  require(!train.empty(), ErrorKind::Data, "training split has no windows");
  require(!valid.empty(), ErrorKind::Data, "validation split has no windows");

  const std::uint64_t seed = train_config.seed;
  const std::vector<SeriesWindow> train_n = normalize_all(train);
  std::vector<SeriesWindow> valid_n;
  for (std::size_t i = 0; i < valid.size(); i += train_config.valid_stride) {
    valid_n.push_back(instance_normalize(valid[i]).window);
  }

  Checkpoint ckpt;
  ckpt.train_config = train_config;
  ckpt.model = TimeDiffModel(model_config, seed);
  const AdamConfig adam_config{train_config.learning_rate, 0.9, 0.999, 1e-8};
  ckpt.adam = AdamState{adam_config, {}, {}, 0};

  if (model_config.use_ar) {
    ArPretrainOptions ar_options{train_config.ar_epochs, train_config.batch_size, adam_config};
    ArPretrainResult ar = ar_pretrain(train_n, ar_options, mix_seed(seed, 1));
    ckpt.model.ar = std::move(ar.model);
    ckpt.ar_losses = std::move(ar.epoch_losses);
  }

  TimeDiffModel model = ckpt.model;
  AdamState adam = ckpt.adam;
  Rng rng = child_rng(seed, 2);
  const std::uint64_t valid_seed = mix_seed(seed, 3);
  std::vector<std::size_t> order(train_n.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t batch_counter = 0;

  for (std::size_t epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::vector<SeriesWindow> batch;
    for (std::size_t start = 0; start < order.size(); start += train_config.batch_size) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + train_config.batch_size);
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_n[order[i]]);
      loss_sum += train_step(model, batch, adam, rng, batch_counter++);
      ++batches;
    }

    EpochRecord record{epoch, loss_sum / static_cast<double>(batches),
                       normalized_validation(model, valid_n, train_config.valid_sampler_steps, valid_seed)};
    ckpt.history.push_back(record);
    ckpt.epochs_run = epoch;
    if (on_epoch) on_epoch(record);

    if (record.valid_mse < ckpt.best_validation) {
      ckpt.best_validation = record.valid_mse;
      ckpt.best_epoch = epoch;
      ckpt.model = model;
      ckpt.adam = adam;
    } else if (epoch - ckpt.best_epoch >= train_config.patience) {
      break;
    }
  }
  require(ckpt.best_epoch > 0, ErrorKind::Numeric, "validation MSE was never finite");
  ckpt.trained = true;
  return ckpt;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

Tensor run_sampler(const DiffusionSchedule& schedule, Head head, const Predictor& predict,
                   const Shape& shape, const SamplerOptions& options, std::span<Rng> rngs) {
  require(shape.size() == 3 && rngs.size() == shape[0], ErrorKind::Shape,
          "sampler: need a (B, d, H) shape and one generator per item");
  const std::size_t B = shape[0];
  const std::size_t per_item = shape[1] * shape[2];
  const std::size_t count = options.steps == 0 ? schedule.steps() : options.steps;
  const std::vector<std::size_t> steps = strided_subschedule(schedule, count);

  auto draw_noise = [&](double scale) {
    Tensor noise(shape);
    for (std::size_t b = 0; b < B; ++b) {
      fill_normal(std::span<double>(noise.data() + b * per_item, per_item), rngs[b]);
    }
    noise *= scale;
    return noise;
  };

  Tensor x = draw_noise(options.start_noise);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::size_t from = steps[i];
    const std::size_t to = i + 1 < steps.size() ? steps[i + 1] : 0;
    const Tensor pred = predict(x, from);
    require_shape(pred, shape, "sampler prediction");
    const Tensor noise = to > 0 ? draw_noise(options.step_noise) : Tensor(shape);
    x = head == Head::Data ? denoise_transition_data(x, from, to, pred, schedule, noise)
                           : denoise_transition_noise(x, from, to, pred, schedule, noise);
  }
  return x;
}

Tensor inference_condition(const TimeDiffModel& model, const Tensor& lookback) {
  Tensor c = future_mixup_infer(model.cond.infer(lookback));
  if (model.config.use_ar) c = concat_channels(c, model.ar.forward(lookback));
  return c;
}

Predictor model_predictor(const TimeDiffModel& model, const Tensor& condition) {
  return [&model, &condition](const Tensor& x, std::size_t k) {
    const std::vector<std::size_t> steps(x.dim(0), k);
    return model.denoiser.infer(x, steps, condition);
  };
}

std::size_t evaluation_threads() {
  if (const char* env = std::getenv("DIFFCAST_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    require(end != env && *end == '\0' && v >= 1, ErrorKind::Config,
            "DIFFCAST_THREADS must be a positive integer");
    return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<Tensor> sample_normalized(const TimeDiffModel& model, std::span<const Tensor> lookbacks,
                                      const ForecastOptions& options, std::uint64_t seed) {
  require(options.samples >= 1, ErrorKind::Config, "sample count must be positive");
  require(options.chunk >= 1, ErrorKind::Config, "chunk size must be positive");
  const ModelConfig& cfg = model.config;
  const std::size_t n = lookbacks.size();
  const std::size_t chunks = (n + options.chunk - 1) / options.chunk;
  std::vector<Tensor> out(n);

  auto run_chunk = [&](std::size_t chunk) {
    const std::size_t begin = chunk * options.chunk;
    const std::size_t end = std::min(n, begin + options.chunk);
    const std::size_t B = end - begin;
    const Tensor lookback = stack_batch(lookbacks.subspan(begin, B));
    const Tensor condition = inference_condition(model, lookback);
    const Predictor predict = model_predictor(model, condition);
    Tensor sum({B, cfg.variables, cfg.horizon});
    for (std::size_t s = 0; s < options.samples; ++s) {
      std::vector<Rng> rngs;
      rngs.reserve(B);
      for (std::size_t b = 0; b < B; ++b) rngs.push_back(child_rng(mix_seed(seed, begin + b), s));
      sum += run_sampler(model.schedule, cfg.head, predict, sum.shape(), options.sampler, rngs);
    }
    sum *= 1.0 / static_cast<double>(options.samples);
    for (std::size_t b = 0; b < B; ++b) out[begin + b] = batch_item(sum, b);
  };

  const std::size_t threads =
      std::min(chunks, options.threads == 0 ? evaluation_threads() : options.threads);
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t c = next++; c < chunks; c = next++) run_chunk(c);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<Tensor> forecast(const Checkpoint& checkpoint, std::span<const Tensor> lookbacks,
                             const ForecastOptions& options, std::uint64_t seed) {
  require(checkpoint.trained, ErrorKind::Checkpoint, "checkpoint has not been trained");
  std::vector<NormStats> stats;
  std::vector<Tensor> normalized;
  stats.reserve(lookbacks.size());
  normalized.reserve(lookbacks.size());
  for (const auto& lb : lookbacks) {
    require_shape(lb, {checkpoint.model.config.variables, checkpoint.model.config.lookback}, "lookback");
    stats.push_back(lookback_stats(lb));
    normalized.push_back(apply_normalization(lb, stats.back()));
  }
  std::vector<Tensor> out = sample_normalized(checkpoint.model, normalized, options, seed);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = denormalize(out[i], stats[i]);
  return out;
}

double mse_eval(const Tensor& forecast, const Tensor& target) {
  require(forecast.shape() == target.shape() && !forecast.empty(), ErrorKind::Shape,
          "mse: forecast " + shape_string(forecast.shape()) + " vs target " +
              shape_string(target.shape()));
  return squared_norm(forecast - target) / static_cast<double>(forecast.size());
}

double mse_eval(std::span<const Tensor> forecasts, std::span<const Tensor> targets) {
  require(forecasts.size() == targets.size() && !forecasts.empty(), ErrorKind::Shape,
          "mse: " + std::to_string(forecasts.size()) + " forecasts for " +
              std::to_string(targets.size()) + " targets");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    require(forecasts[i].shape() == targets[i].shape(), ErrorKind::Shape,
            "mse: shape mismatch at window " + std::to_string(i));
    sum += squared_norm(forecasts[i] - targets[i]);
    count += targets[i].size();
  }
  return sum / static_cast<double>(count);
}

EvalResult evaluate_windows(const Checkpoint& checkpoint, std::span<const SeriesWindow> windows,
                            const ForecastOptions& options, std::uint64_t seed) {
  require(!windows.empty(), ErrorKind::Data, "no windows to evaluate");
  std::vector<Tensor> lookbacks, targets;
  for (const auto& w : windows) {
    lookbacks.push_back(w.lookback);
    targets.push_back(w.target);
  }
  EvalResult result;
  result.forecasts = forecast(checkpoint, lookbacks, options, seed);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    result.window_mse.push_back(mse_eval(result.forecasts[i], targets[i]));
  }
  result.mse = mse_eval(result.forecasts, targets);
  return result;
}

}  // namespace diffcast
