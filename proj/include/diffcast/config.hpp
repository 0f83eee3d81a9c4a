#pragma once

#include <string>
#include <vector>

#include "diffcast/data.hpp"
#include "diffcast/pipeline.hpp"

namespace diffcast {

/// Everything a CLI run needs. Parsed from a flat JSON object; see
/// docs/config.md for the key list.
struct RunConfig {
  std::string data_path;  // empty: generate `synth` instead
  SynthSpec synth{};
  SplitRatios split{};
  ModelConfig model{};
  TrainConfig train{};
  std::string out_dir = "run";

  bool synthetic() const { return data_path.empty(); }
  void validate() const;
};

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// ErrorKind::Config. Missing keys keep their defaults.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// Flat JSON text for a config; parse_run_config(to_json(c)) == c.
std::string to_json(const RunConfig& config);

/// Model and training blocks alone, as stored in checkpoints.
std::string model_train_json(const ModelConfig& model, const TrainConfig& train);
void parse_model_train_json(const std::string& text, ModelConfig& model, TrainConfig& train);

/// Loads the CSV or generates the synthetic series. Checks that the variable
/// count matches the model.
RawSeries load_series(const RunConfig& config);

struct Dataset {
  Splits splits;
  std::vector<SeriesWindow> train;  // stride 1
  std::vector<SeriesWindow> valid;  // stride 1; train_loop subsamples
  std::vector<SeriesWindow> test;   // eval_stride
};

Dataset make_dataset(const RawSeries& series, const RunConfig& config);

}  // namespace diffcast
