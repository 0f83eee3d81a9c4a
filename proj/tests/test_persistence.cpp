#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "diffcast/checkpoint.hpp"
#include "diffcast/config.hpp"
#include "diffcast/error.hpp"
#include "diffcast/workflow.hpp"

using namespace diffcast;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_run() {
  RunConfig c;
  c.synth = {SynthKind::SineMix, 1, 200, 0.1, 2};
  c.model.lookback = 16;
  c.model.horizon = 8;
  c.model.diffusion_steps = 10;
  c.model.width = 8;
  c.model.embed_hidden = 8;
  c.train.batch_size = 16;
  c.train.max_epochs = 2;
  c.train.ar_epochs = 2;
  c.train.samples = 2;
  c.train.seed = 3;
  return c;
}

Checkpoint tiny_checkpoint() {
  const RunConfig c = tiny_run();
  const Dataset d = make_dataset(load_series(c), c);
  return train_loop(d.train, d.valid, c.model, c.train);
}

void expect_same_params(TimeDiffModel& a, TimeDiffModel& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
  }
  const auto ba = a.buffers(), bb = b.buffers();
  ASSERT_EQ(ba.size(), bb.size());
  for (std::size_t i = 0; i < ba.size(); ++i) EXPECT_EQ(*ba[i].value, *bb[i].value) << ba[i].name;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  Checkpoint c = tiny_checkpoint();
  const std::string bytes = serialize_checkpoint(c);
  ASSERT_EQ(bytes.substr(0, 8), "TDCKPT01");
  Checkpoint back = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);

  expect_same_params(c.model, back.model);
  EXPECT_EQ(back.model.schedule.betas(), c.model.schedule.betas());
  EXPECT_EQ(back.adam.step_count, c.adam.step_count);
  ASSERT_EQ(back.adam.first_moment.size(), c.adam.first_moment.size());
  for (std::size_t i = 0; i < c.adam.first_moment.size(); ++i) {
    EXPECT_EQ(back.adam.first_moment[i], c.adam.first_moment[i]);
    EXPECT_EQ(back.adam.second_moment[i], c.adam.second_moment[i]);
  }
  EXPECT_EQ(back.epochs_run, c.epochs_run);
  EXPECT_EQ(back.best_epoch, c.best_epoch);
  EXPECT_EQ(back.best_validation, c.best_validation);
  EXPECT_EQ(back.ar_losses, c.ar_losses);
  EXPECT_EQ(loss_history_csv(back), loss_history_csv(c));
  EXPECT_TRUE(back.trained);
  EXPECT_EQ(back.train_config.seed, 3u);
  EXPECT_EQ(back.model.config.width, 8u);
}

TEST(Checkpoint, LoadedModelForecastsIdentically) {
  const Checkpoint c = tiny_checkpoint();
  const fs::path path = fs::temp_directory_path() / "diffcast_test_ckpt.bin";
  save_checkpoint(c, path.string());
  const Checkpoint back = load_checkpoint(path.string());
  const RunConfig run = tiny_run();
  const Dataset d = make_dataset(load_series(run), run);
  ForecastOptions opt;
  opt.samples = 2;
  EXPECT_EQ(evaluate_windows(c, d.test, opt, 1).forecasts, evaluate_windows(back, d.test, opt, 1).forecasts);
}

TEST(Checkpoint, RejectsDamagedFiles) {
  const std::string bytes = serialize_checkpoint(tiny_checkpoint());
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  const auto kind_of = [](const std::string& b) {
    try {
      deserialize_checkpoint(b);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Usage;
  };
  EXPECT_EQ(kind_of(bad_magic), ErrorKind::Checkpoint);
  EXPECT_EQ(kind_of(bytes.substr(0, bytes.size() / 2)), ErrorKind::Checkpoint);
  EXPECT_EQ(kind_of(bytes + "extra"), ErrorKind::Checkpoint);
  EXPECT_EQ(kind_of(""), ErrorKind::Checkpoint);
  EXPECT_THROW(load_checkpoint((fs::temp_directory_path() / "diffcast_no_such.bin").string()), Error);
}

TEST(Config, DefaultsAndRoundTrip) {
  const RunConfig d = parse_run_config("{}");
  EXPECT_EQ(d.model.lookback, 96u);
  EXPECT_EQ(d.model.horizon, 24u);
  EXPECT_EQ(d.model.diffusion_steps, 100u);
  EXPECT_EQ(d.model.width, 256u);
  EXPECT_EQ(d.train.batch_size, 64u);
  EXPECT_EQ(d.train.max_epochs, 100u);
  EXPECT_EQ(d.train.learning_rate, 1e-3);
  EXPECT_EQ(d.train.samples, 10u);

  RunConfig c = tiny_run();
  c.model.mixup = {MixStrategy::Segment, 0.3};
  c.model.head = Head::Noise;
  c.split = {{7.0, 1.0, 2.0}};
  const std::string text = to_json(c);
  EXPECT_EQ(to_json(parse_run_config(text)), text);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_run_config(R"({"lookbak": 96})"), Error);
  EXPECT_THROW(parse_run_config(R"({"horizon": 0})"), Error);
  EXPECT_THROW(parse_run_config(R"({"horizon": "24"})"), Error);
  EXPECT_THROW(parse_run_config(R"({"mixup": "blend"})"), Error);
  EXPECT_THROW(parse_run_config(R"({"split_ratios": [6, 2]})"), Error);
  EXPECT_THROW(parse_run_config("[1, 2]"), Error);
  EXPECT_THROW(parse_run_config("{"), Error);
  try {
    parse_run_config(R"({"lookbak": 96})");
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
    EXPECT_NE(std::string(e.what()).find("lookbak"), std::string::npos);
  }
}

TEST(Config, DatasetNeedsLongEnoughSplits) {
  RunConfig c = tiny_run();
  c.synth.length = 60;
  EXPECT_THROW(make_dataset(load_series(c), c), Error);
  c = tiny_run();
  c.model.variables = 2;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Workflow, AblationCellLayout) {
  const ModelConfig base = tiny_run().model;
  const auto cond = ablation_cells(base, AblationSuite::Conditioning);
  ASSERT_EQ(cond.size(), 4u);
  EXPECT_TRUE(cond[0].model.use_mixup && cond[0].model.use_ar);
  EXPECT_TRUE(!cond[3].model.use_mixup && !cond[3].model.use_ar);
  EXPECT_EQ(ablation_cells(base, AblationSuite::Mixup).size(), 11u);
  const auto heads = ablation_cells(base, AblationSuite::Head);
  ASSERT_EQ(heads.size(), 2u);
  EXPECT_EQ(heads[1].model.head, Head::Noise);
  EXPECT_THROW(parse_ablation_suite("dropout"), Error);
}

TEST(Workflow, LossHistoryFormat) {
  Checkpoint c;
  c.history = {{1, 0.5, 0.25}, {2, 0.1, 1e-7}};
  EXPECT_EQ(loss_history_csv(c), "epoch,train_loss,valid_mse\n1,0.5,0.25\n2,0.1,1e-07\n");
}
