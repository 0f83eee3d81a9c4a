#include "diffcast/workflow.hpp"

#include <sstream>

#include "diffcast/error.hpp"

namespace diffcast {

std::string loss_history_csv(const Checkpoint& checkpoint) {
  std::ostringstream out;
  out << "epoch,train_loss,valid_mse\n";
  for (const auto& r : checkpoint.history) {
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.valid_mse) << '\n';
  }
  return out.str();
}

ForecastOptions forecast_options(const TrainConfig& train) {
  ForecastOptions options;
  options.samples = train.samples;
  options.sampler.steps = train.sampler_steps;
  return options;
}

std::uint64_t evaluation_seed(std::uint64_t train_seed) { return mix_seed(train_seed, 4); }

RunResult train_and_evaluate(const Dataset& dataset, const ModelConfig& model, const TrainConfig& train,
                             const EpochCallback& on_epoch) {
  RunResult result;
  result.checkpoint = train_loop(dataset.train, dataset.valid, model, train, on_epoch);
  result.test = evaluate_windows(result.checkpoint, dataset.test, forecast_options(train),
                                 evaluation_seed(train.seed));
  return result;
}

AblationSuite parse_ablation_suite(const std::string& name) {
  if (name == "conditioning") return AblationSuite::Conditioning;
  if (name == "mixup") return AblationSuite::Mixup;
  if (name == "head") return AblationSuite::Head;
  fail(ErrorKind::Usage, "unknown ablation suite '" + name + "' (expected conditioning, mixup or head)");
}

std::string to_string(AblationSuite suite) {
  switch (suite) {
    case AblationSuite::Conditioning: return "conditioning";
    case AblationSuite::Mixup: return "mixup";
    case AblationSuite::Head: return "head";
  }
  return "unknown";
}

std::vector<AblationCell> ablation_cells(const ModelConfig& base, AblationSuite suite) {
  std::vector<AblationCell> cells;
  switch (suite) {
    case AblationSuite::Conditioning:
      for (const bool mixup : {true, false}) {
        for (const bool ar : {true, false}) {
          ModelConfig m = base;
          m.use_mixup = mixup;
          m.use_ar = ar;
          cells.push_back({std::string(mixup ? "mixup" : "no_mixup") + "+" + (ar ? "ar" : "no_ar"), m});
        }
      }
      break;
    case AblationSuite::Mixup: {
      ModelConfig soft = base;
      soft.use_mixup = true;
      soft.mixup = {MixStrategy::Soft, 0.5};
      cells.push_back({"soft", soft});
      for (const MixStrategy strategy : {MixStrategy::Hard, MixStrategy::Segment}) {
        for (const double tau : {0.1, 0.3, 0.5, 0.7, 0.9}) {
          ModelConfig m = base;
          m.use_mixup = true;
          m.mixup = {strategy, tau};
          std::ostringstream label;
          label << to_string(strategy) << "_tau" << tau;
          cells.push_back({label.str(), m});
        }
      }
      break;
    }
    case AblationSuite::Head:
      for (const Head head : {Head::Data, Head::Noise}) {
        ModelConfig m = base;
        m.head = head;
        cells.push_back({to_string(head), m});
      }
      break;
  }
  return cells;
}

std::vector<AblationRow> run_ablation(const Dataset& dataset, const RunConfig& config, AblationSuite suite,
                                      std::span<const std::uint64_t> seeds,
                                      const AblationProgress& progress) {
  require(!seeds.empty(), ErrorKind::Config, "ablation needs at least one seed");
  std::vector<AblationRow> rows;
  for (const AblationCell& cell : ablation_cells(config.model, suite)) {
    AblationRow row{cell, {seeds.begin(), seeds.end()}, {}, 0.0};
    for (const std::uint64_t seed : seeds) {
      TrainConfig train = config.train;
      train.seed = seed;
      const double mse = train_and_evaluate(dataset, cell.model, train).test.mse;
      row.mse.push_back(mse);
      row.mean_mse += mse / static_cast<double>(seeds.size());
      if (progress) progress(cell, seed, mse);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "variant,mixup,tau,use_ar,head,seeds,mean_mse";
  const std::size_t n = rows.empty() ? 0 : rows.front().mse.size();
  for (std::size_t i = 0; i < n; ++i) out << ",mse_seed" << i;
  out << '\n';
  for (const auto& row : rows) {
    const ModelConfig& m = row.cell.model;
    out << row.cell.label << ',' << (m.use_mixup ? to_string(m.mixup.strategy) : "none") << ','
        << format_double(m.mixup.tau) << ',' << (m.use_ar ? "true" : "false") << ',' << to_string(m.head)
        << ',';
    for (std::size_t i = 0; i < row.seeds.size(); ++i) out << (i ? ";" : "") << row.seeds[i];
    out << ',' << format_double(row.mean_mse);
    for (double v : row.mse) out << ',' << format_double(v);
    out << '\n';
  }
  return out.str();
}

}  // namespace diffcast
