#include "diffcast/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "diffcast/error.hpp"
#include "json.hpp"

namespace diffcast {

namespace {

using nlohmann::json;

// One entry per accepted key: how to read it from JSON and how to write it back.
struct Field {
  std::function<void(const json&, RunConfig&)> read;
  std::function<json(const RunConfig&)> write;
  bool checkpointed;  // part of the model/train block stored in checkpoints
};

std::size_t as_count(const json& v, const std::string& key) {
  require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0), ErrorKind::Config,
          "config key '" + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

double as_real(const json& v, const std::string& key) {
  require(v.is_number(), ErrorKind::Config, "config key '" + key + "' must be a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& key) {
  require(v.is_boolean(), ErrorKind::Config, "config key '" + key + "' must be true or false");
  return v.get<bool>();
}

std::string as_text(const json& v, const std::string& key) {
  require(v.is_string(), ErrorKind::Config, "config key '" + key + "' must be a string");
  return v.get<std::string>();
}

template <typename T>
Field count_field(const std::string& key, T RunConfig::*group, std::size_t T::*member, bool ckpt) {
  return {[=](const json& v, RunConfig& c) { c.*group.*member = as_count(v, key); },
          [=](const RunConfig& c) { return json(c.*group.*member); }, ckpt};
}

template <typename T>
Field real_field(const std::string& key, T RunConfig::*group, double T::*member, bool ckpt) {
  return {[=](const json& v, RunConfig& c) { c.*group.*member = as_real(v, key); },
          [=](const RunConfig& c) { return json(c.*group.*member); }, ckpt};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["data_path"] = {[](const json& v, RunConfig& c) { c.data_path = as_text(v, "data_path"); },
                      [](const RunConfig& c) { return json(c.data_path); }, false};
    f["out_dir"] = {[](const json& v, RunConfig& c) { c.out_dir = as_text(v, "out_dir"); },
                    [](const RunConfig& c) { return json(c.out_dir); }, false};
    f["synth_kind"] = {
        [](const json& v, RunConfig& c) { c.synth.kind = parse_synth_kind(as_text(v, "synth_kind")); },
        [](const RunConfig& c) { return json(to_string(c.synth.kind)); }, false};
    f["synth_variables"] = count_field("synth_variables", &RunConfig::synth, &SynthSpec::variables, false);
    f["synth_length"] = count_field("synth_length", &RunConfig::synth, &SynthSpec::length, false);
    f["synth_noise_std"] = real_field("synth_noise_std", &RunConfig::synth, &SynthSpec::noise_std, false);
    f["synth_seed"] = {
        [](const json& v, RunConfig& c) { c.synth.seed = as_count(v, "synth_seed"); },
        [](const RunConfig& c) { return json(c.synth.seed); }, false};
    f["split_ratios"] = {
        [](const json& v, RunConfig& c) {
          require(v.is_array() && v.size() == 3, ErrorKind::Config,
                  "config key 'split_ratios' must be an array of three numbers");
          for (std::size_t i = 0; i < 3; ++i) c.split.parts[i] = as_real(v[i], "split_ratios");
        },
        [](const RunConfig& c) { return json(c.split.parts); }, false};

    f["variables"] = count_field("variables", &RunConfig::model, &ModelConfig::variables, true);
    f["lookback"] = count_field("lookback", &RunConfig::model, &ModelConfig::lookback, true);
    f["horizon"] = count_field("horizon", &RunConfig::model, &ModelConfig::horizon, true);
    f["diffusion_steps"] =
        count_field("diffusion_steps", &RunConfig::model, &ModelConfig::diffusion_steps, true);
    f["beta_start"] = real_field("beta_start", &RunConfig::model, &ModelConfig::beta_start, true);
    f["beta_end"] = real_field("beta_end", &RunConfig::model, &ModelConfig::beta_end, true);
    f["width"] = count_field("width", &RunConfig::model, &ModelConfig::width, true);
    f["embed_hidden"] = count_field("embed_hidden", &RunConfig::model, &ModelConfig::embed_hidden, true);
    f["dropout"] = real_field("dropout", &RunConfig::model, &ModelConfig::dropout, true);
    f["mixup"] = {[](const json& v, RunConfig& c) {
                    const std::string name = as_text(v, "mixup");
                    c.model.use_mixup = name != "none";
                    if (c.model.use_mixup) c.model.mixup.strategy = parse_mix_strategy(name);
                  },
                  [](const RunConfig& c) {
                    return json(c.model.use_mixup ? to_string(c.model.mixup.strategy) : "none");
                  },
                  true};
    f["tau"] = {[](const json& v, RunConfig& c) { c.model.mixup.tau = as_real(v, "tau"); },
                [](const RunConfig& c) { return json(c.model.mixup.tau); }, true};
    f["use_ar"] = {[](const json& v, RunConfig& c) { c.model.use_ar = as_bool(v, "use_ar"); },
                   [](const RunConfig& c) { return json(c.model.use_ar); }, true};
    f["head"] = {[](const json& v, RunConfig& c) { c.model.head = parse_head(as_text(v, "head")); },
                 [](const RunConfig& c) { return json(to_string(c.model.head)); }, true};

    f["batch_size"] = count_field("batch_size", &RunConfig::train, &TrainConfig::batch_size, true);
    f["max_epochs"] = count_field("max_epochs", &RunConfig::train, &TrainConfig::max_epochs, true);
    f["learning_rate"] = real_field("learning_rate", &RunConfig::train, &TrainConfig::learning_rate, true);
    f["patience"] = count_field("patience", &RunConfig::train, &TrainConfig::patience, true);
    f["ar_epochs"] = count_field("ar_epochs", &RunConfig::train, &TrainConfig::ar_epochs, true);
    f["samples"] = count_field("samples", &RunConfig::train, &TrainConfig::samples, true);
    f["sampler_steps"] = count_field("sampler_steps", &RunConfig::train, &TrainConfig::sampler_steps, true);
    f["valid_sampler_steps"] =
        count_field("valid_sampler_steps", &RunConfig::train, &TrainConfig::valid_sampler_steps, true);
    f["valid_stride"] = count_field("valid_stride", &RunConfig::train, &TrainConfig::valid_stride, true);
    f["eval_stride"] = count_field("eval_stride", &RunConfig::train, &TrainConfig::eval_stride, true);
    f["seed"] = {[](const json& v, RunConfig& c) { c.train.seed = as_count(v, "seed"); },
                 [](const RunConfig& c) { return json(c.train.seed); }, true};
    return f;
  }();
  return table;
}

json parse_object(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
  }
  require(j.is_object(), ErrorKind::Config, "config must be a JSON object");
  return j;
}

void read_fields(const json& j, RunConfig& config, bool checkpoint_only) {
  const auto& table = fields();
  for (const auto& [key, value] : j.items()) {
    const auto it = table.find(key);
    require(it != table.end() && (!checkpoint_only || it->second.checkpointed), ErrorKind::Config,
            "unknown config key '" + key + "'");
    it->second.read(value, config);
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate(model);
  if (synthetic()) {
    require(synth.variables == model.variables, ErrorKind::Config,
            "synth_variables (" + std::to_string(synth.variables) + ") must equal variables (" +
                std::to_string(model.variables) + ")");
    require(synth.length >= 1, ErrorKind::Config, "synth_length must be positive");
    require(synth.noise_std >= 0.0, ErrorKind::Config, "synth_noise_std must be non-negative");
  }
  for (double r : split.parts) {
    require(r > 0.0 && std::isfinite(r), ErrorKind::Config, "split ratios must be positive");
  }
  require(!out_dir.empty(), ErrorKind::Config, "out_dir must not be empty");
}

RunConfig parse_run_config(const std::string& json_text) {
  RunConfig config;
  read_fields(parse_object(json_text), config, false);
  config.validate();
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

std::string to_json(const RunConfig& config) {
  json j = json::object();
  for (const auto& [key, field] : fields()) j[key] = field.write(config);
  return j.dump(2);
}

std::string model_train_json(const ModelConfig& model, const TrainConfig& train) {
  RunConfig config;
  config.model = model;
  config.train = train;
  json j = json::object();
  for (const auto& [key, field] : fields()) {
    if (field.checkpointed) j[key] = field.write(config);
  }
  return j.dump();
}

void parse_model_train_json(const std::string& text, ModelConfig& model, TrainConfig& train) {
  RunConfig config;
  read_fields(parse_object(text), config, true);
  config.model.validate();
  config.train.validate(config.model);
  model = config.model;
  train = config.train;
}

RawSeries load_series(const RunConfig& config) {
  RawSeries series = config.synthetic() ? synth_generate(config.synth) : load_csv(config.data_path);
  require(series.variables() == config.model.variables, ErrorKind::Data,
          "dataset has " + std::to_string(series.variables()) + " variables but the config says " +
              std::to_string(config.model.variables));
  return series;
}

Dataset make_dataset(const RawSeries& series, const RunConfig& config) {
  const std::size_t L = config.model.lookback, H = config.model.horizon;
  Dataset ds;
  ds.splits = chronological_split(series, config.split, L + H);
  ds.train = sliding_windows(ds.splits.train, L, H, 1);
  ds.valid = sliding_windows(ds.splits.valid, L, H, 1);
  ds.test = sliding_windows(ds.splits.test, L, H, config.train.eval_stride);
  return ds;
}

}  // namespace diffcast
