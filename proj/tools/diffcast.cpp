// diffcast: command-line front end for training, forecasting and diagnostics.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "diffcast/adf.hpp"
#include "diffcast/checkpoint.hpp"
#include "diffcast/config.hpp"
#include "diffcast/error.hpp"
#include "diffcast/gradsuite.hpp"
#include "diffcast/workflow.hpp"

namespace fs = std::filesystem;
using namespace diffcast;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return 2;
    case ErrorKind::Config: return 3;
    case ErrorKind::Data: return 4;
    case ErrorKind::Io: return 5;
    case ErrorKind::Numeric: return 6;
    case ErrorKind::Checkpoint: return 7;
    case ErrorKind::Shape: return 8;
  }
  return 1;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorKind::Io, "failed writing " + path.string());
}

fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::Io, "cannot create directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

const RawSeries& pick_split(const Splits& splits, const std::string& name) {
  if (name == "train") return splits.train;
  if (name == "valid") return splits.valid;
  if (name == "test") return splits.test;
  fail(ErrorKind::Usage, "unknown split '" + name + "' (expected train, valid or test)");
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

int cmd_train(const TrainArgs& args) {
  RunConfig config = load_run_config(args.config);
  if (args.seed) config.train.seed = *args.seed;
  if (args.out) config.out_dir = *args.out;
  config.validate();
  const Dataset dataset = make_dataset(load_series(config), config);

  const Checkpoint ckpt =
      train_loop(dataset.train, dataset.valid, config.model, config.train, [](const EpochRecord& r) {
        std::fprintf(stderr, "epoch %zu  train_loss %.6f  valid_mse %.6f\n", r.epoch, r.train_loss,
                     r.valid_mse);
      });
  const fs::path dir = prepare_dir(config.out_dir);
  save_checkpoint(ckpt, (dir / "checkpoint.bin").string());
  write_text(dir / "loss_history.csv", loss_history_csv(ckpt));
  write_text(dir / "config.json", to_json(config) + "\n");
  std::printf("epochs %zu  best_epoch %zu  best_valid_mse %s\n", ckpt.epochs_run, ckpt.best_epoch,
              format_double(ckpt.best_validation).c_str());
  std::printf("wrote %s and %s\n", (dir / "checkpoint.bin").c_str(), (dir / "loss_history.csv").c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::string input;
  std::size_t samples = 10;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  std::optional<std::string> out;
};

int cmd_predict(const PredictArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  const ModelConfig& m = ckpt.model.config;
  require(ckpt.trained, ErrorKind::Checkpoint, "checkpoint has not been trained");
  require(args.samples >= 1, ErrorKind::Usage, "--samples must be positive");
  require(args.steps <= m.diffusion_steps, ErrorKind::Usage,
          "--steps cannot exceed the " + std::to_string(m.diffusion_steps) + " diffusion steps");
  const RawSeries input = load_csv(args.input);
  require(input.variables() == m.variables, ErrorKind::Data,
          "input has " + std::to_string(input.variables()) + " variables, checkpoint expects " +
              std::to_string(m.variables));
  require(input.length >= m.lookback, ErrorKind::Data,
          "input has " + std::to_string(input.length) + " rows, need at least lookback = " +
              std::to_string(m.lookback));

  Tensor lookback({m.variables, m.lookback});
  const std::size_t start = input.length - m.lookback;
  for (std::size_t j = 0; j < m.variables; ++j) {
    for (std::size_t t = 0; t < m.lookback; ++t) lookback.at(j, t) = input.at(start + t, j);
  }
  ForecastOptions options;
  options.samples = args.samples;
  options.sampler.steps = args.steps;
  const Tensor fc = forecast(ckpt, std::span<const Tensor>(&lookback, 1), options, args.seed).front();

  std::ostringstream csv;
  for (std::size_t j = 0; j < m.variables; ++j) csv << (j ? "," : "") << input.names[j];
  csv << '\n';
  for (std::size_t h = 0; h < m.horizon; ++h) {
    for (std::size_t j = 0; j < m.variables; ++j) csv << (j ? "," : "") << format_double(fc.at(j, h));
    csv << '\n';
  }
  if (args.out) {
    write_text(*args.out, csv.str());
  } else {
    std::cout << csv.str();
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint;
  std::string config;
  std::string split = "test";
  std::optional<std::size_t> samples;
  std::optional<std::size_t> steps;
  std::uint64_t seed = 0;
  std::optional<std::string> out;
};

int cmd_evaluate(const EvaluateArgs& args) {
  RunConfig config = load_run_config(args.config);
  if (args.out) config.out_dir = *args.out;
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  const ModelConfig& m = ckpt.model.config;
  require(m.variables == config.model.variables && m.lookback == config.model.lookback &&
              m.horizon == config.model.horizon,
          ErrorKind::Config, "config variables/lookback/horizon differ from the checkpoint");
  ForecastOptions options = forecast_options(config.train);
  if (args.samples) options.samples = *args.samples;
  if (args.steps) options.sampler.steps = *args.steps;
  require(options.samples >= 1, ErrorKind::Usage, "--samples must be positive");
  require(options.sampler.steps <= m.diffusion_steps, ErrorKind::Usage,
          "--steps cannot exceed the diffusion steps");

  const Splits splits = chronological_split(load_series(config), config.split, m.lookback + m.horizon);
  const RawSeries& split = pick_split(splits, args.split);
  const std::vector<SeriesWindow> windows =
      sliding_windows(split, m.lookback, m.horizon, config.train.eval_stride);

  const EvalResult result = evaluate_windows(ckpt, windows, options, args.seed);
  const fs::path dir = prepare_dir(config.out_dir);

  std::ostringstream report;
  report << "split=" << args.split << '\n'
         << "windows=" << windows.size() << '\n'
         << "mse=" << format_double(result.mse) << '\n'
         << "samples=" << options.samples << '\n'
         << "sampler_steps=" << (options.sampler.steps == 0 ? m.diffusion_steps : options.sampler.steps)
         << '\n'
         << "seed=" << args.seed << '\n'
         << "checkpoint=" << args.checkpoint << '\n'
         << "config=" << model_train_json(m, ckpt.train_config) << '\n';
  write_text(dir / "metrics.txt", report.str());

  std::ostringstream per_window;
  per_window << "window,origin,mse\n";
  for (std::size_t i = 0; i < windows.size(); ++i) {
    per_window << i << ',' << windows[i].origin << ',' << format_double(result.window_mse[i]) << '\n';
  }
  write_text(dir / "windows.csv", per_window.str());

  std::ostringstream plot;
  plot << "window,step";
  for (std::size_t j = 0; j < m.variables; ++j) plot << ",truth_" << j << ",forecast_" << j;
  plot << '\n';
  for (std::size_t i = 0; i < windows.size(); ++i) {
    for (std::size_t h = 0; h < m.horizon; ++h) {
      plot << i << ',' << h + 1;
      for (std::size_t j = 0; j < m.variables; ++j) {
        plot << ',' << format_double(windows[i].target.at(j, h)) << ','
             << format_double(result.forecasts[i].at(j, h));
      }
      plot << '\n';
    }
  }
  write_text(dir / "plot.csv", plot.str());

  std::cout << report.str();
  return 0;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string config;
  std::string suite;
  std::size_t seeds = 3;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

int cmd_ablate(const AblateArgs& args) {
  const AblationSuite suite = parse_ablation_suite(args.suite);
  RunConfig config = load_run_config(args.config);
  if (args.out) config.out_dir = *args.out;
  require(args.seeds >= 1, ErrorKind::Usage, "--seeds must be positive");
  for (const auto& cell : ablation_cells(config.model, suite)) cell.model.validate();
  const Dataset dataset = make_dataset(load_series(config), config);

  std::vector<std::uint64_t> seeds;
  const std::uint64_t base = args.seed.value_or(config.train.seed);
  for (std::size_t i = 0; i < args.seeds; ++i) seeds.push_back(base + i);

  const auto rows = run_ablation(dataset, config, suite, seeds,
                                 [](const AblationCell& cell, std::uint64_t seed, double mse) {
                                   std::fprintf(stderr, "%s seed %llu mse %.6f\n", cell.label.c_str(),
                                                static_cast<unsigned long long>(seed), mse);
                                 });
  const std::string csv = ablation_csv(rows);
  const fs::path dir = prepare_dir(config.out_dir);
  write_text(dir / ("ablation_" + to_string(suite) + ".csv"), csv);
  std::cout << csv;
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed, std::size_t probes) {
  require(probes >= 1, ErrorKind::Usage, "--probes must be positive");
  bool ok = true;
  std::printf("%-22s %7s %14s  %s\n", "group", "probes", "max_rel_err", "status");
  for (const auto& r : run_gradient_suite(seed, probes)) {
    std::printf("%-22s %7zu %14.3e  %s\n", r.name.c_str(), r.probes, r.max_relative_error,
                r.passed ? "pass" : "FAIL");
    ok = ok && r.passed;
  }
  require(ok, ErrorKind::Numeric, "gradient check failed for at least one group");
  return 0;
}

int cmd_synth(const SynthSpec& spec, const std::string& kind, const std::string& out) {
  SynthSpec s = spec;
  s.kind = parse_synth_kind(kind);
  require(s.variables >= 1 && s.length >= 1, ErrorKind::Usage, "--variables and --length must be positive");
  require(s.noise_std >= 0.0, ErrorKind::Usage, "--noise must be non-negative");
  write_csv(out, synth_generate(s));
  std::printf("wrote %zu rows x %zu variables to %s\n", s.length, s.variables, out.c_str());
  return 0;
}

int cmd_adf(const std::string& input, std::size_t lags) {
  const RawSeries series = load_csv(input);
  std::printf("variable,adf_statistic\n");
  for (std::size_t j = 0; j < series.variables(); ++j) {
    std::printf("%s,%s\n", series.names[j].c_str(), format_double(adf_statistic(series.column(j), lags)).c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffcast: conditional diffusion forecasting"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint + loss history");
  train_cmd->add_option("--config", train.config, "run config (JSON)")->required();
  train_cmd->add_option("--seed", train.seed, "override the config seed");
  train_cmd->add_option("--out", train.out, "output directory");

  PredictArgs predict;
  auto* predict_cmd = app.add_subcommand("predict", "forecast the horizon after the last rows of a CSV");
  predict_cmd->add_option("--checkpoint", predict.checkpoint)->required();
  predict_cmd->add_option("--input", predict.input, "CSV whose last L rows form the lookback")->required();
  predict_cmd->add_option("--samples", predict.samples, "samples averaged per forecast")->capture_default_str();
  predict_cmd->add_option("--steps", predict.steps, "sampler steps, 0 = every diffusion step")
      ->capture_default_str();
  predict_cmd->add_option("--seed", predict.seed)->capture_default_str();
  predict_cmd->add_option("--out", predict.out, "forecast CSV (default: stdout)");

  EvaluateArgs evaluate;
  auto* eval_cmd = app.add_subcommand("evaluate", "MSE over the windows of a split");
  eval_cmd->add_option("--checkpoint", evaluate.checkpoint)->required();
  eval_cmd->add_option("--config", evaluate.config, "run config naming the dataset")->required();
  eval_cmd->add_option("--split", evaluate.split)->capture_default_str();
  eval_cmd->add_option("--samples", evaluate.samples);
  eval_cmd->add_option("--steps", evaluate.steps);
  eval_cmd->add_option("--seed", evaluate.seed)->capture_default_str();
  eval_cmd->add_option("--out", evaluate.out, "report directory");

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation suite");
  ablate_cmd->add_option("--config", ablate.config)->required();
  ablate_cmd->add_option("--suite", ablate.suite, "conditioning | mixup | head")->required();
  ablate_cmd->add_option("--seeds", ablate.seeds, "number of seeds per cell")->capture_default_str();
  ablate_cmd->add_option("--seed", ablate.seed, "first seed (default: config seed)");
  ablate_cmd->add_option("--out", ablate.out, "output directory");

  std::uint64_t grad_seed = 0;
  std::size_t grad_probes = 12;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  grad_cmd->add_option("--seed", grad_seed)->capture_default_str();
  grad_cmd->add_option("--probes", grad_probes, "probes per group")->capture_default_str();

  SynthSpec synth;
  std::string synth_kind = "sine_mix";
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset as CSV");
  synth_cmd->add_option("--kind", synth_kind, "sine_mix | trend_sine | random_walk")->capture_default_str();
  synth_cmd->add_option("--variables", synth.variables)->capture_default_str();
  synth_cmd->add_option("--length", synth.length)->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise_std)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--out", synth_out)->required();

  std::string adf_input;
  std::size_t adf_lags = 1;
  auto* adf_cmd = app.add_subcommand("adf", "ADF statistic for every column of a CSV");
  adf_cmd->add_option("--input", adf_input)->required();
  adf_cmd->add_option("--lags", adf_lags)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return exit_code(ErrorKind::Usage);
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*predict_cmd) return cmd_predict(predict);
    if (*eval_cmd) return cmd_evaluate(evaluate);
    if (*ablate_cmd) return cmd_ablate(ablate);
    if (*grad_cmd) return cmd_gradcheck(grad_seed, grad_probes);
    if (*synth_cmd) return cmd_synth(synth, synth_kind, synth_out);
    if (*adf_cmd) return cmd_adf(adf_input, adf_lags);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", std::string(to_string(e.kind())).c_str(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
