#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "diffcast/config.hpp"

namespace diffcast {

/// epoch,train_loss,valid_mse with shortest round-trip number formatting.
std::string loss_history_csv(const Checkpoint& checkpoint);

/// Forecast options taken from the training config (samples, sampler steps).
ForecastOptions forecast_options(const TrainConfig& train);

struct RunResult {
  Checkpoint checkpoint;
  EvalResult test;
};

/// Trains on the dataset splits and evaluates on the test windows with the
/// evaluation seed derived from the training seed.
RunResult train_and_evaluate(const Dataset& dataset, const ModelConfig& model, const TrainConfig& train,
                             const EpochCallback& on_epoch = {});

std::uint64_t evaluation_seed(std::uint64_t train_seed);

enum class AblationSuite { Conditioning, Mixup, Head };

AblationSuite parse_ablation_suite(const std::string& name);
std::string to_string(AblationSuite suite);

struct AblationCell {
  std::string label;
  ModelConfig model;
};

/// conditioning: mixup x AR on/off (4 cells). mixup: soft plus hard and
/// segment at tau in {0.1, 0.3, 0.5, 0.7, 0.9} (11 cells). head: data and
/// noise prediction (2 cells).
std::vector<AblationCell> ablation_cells(const ModelConfig& base, AblationSuite suite);

struct AblationRow {
  AblationCell cell;
  std::vector<std::uint64_t> seeds;
  std::vector<double> mse;
  double mean_mse = 0.0;
};

using AblationProgress = std::function<void(const AblationCell&, std::uint64_t seed, double mse)>;

/// Every cell is trained and tested once per seed; all cells share the seeds.
std::vector<AblationRow> run_ablation(const Dataset& dataset, const RunConfig& config, AblationSuite suite,
                                      std::span<const std::uint64_t> seeds,
                                      const AblationProgress& progress = {});

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace diffcast
