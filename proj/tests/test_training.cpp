#include <gtest/gtest.h>

#include <cmath>

#include "kandu/train.hpp"
#include "test_util.hpp"

using namespace kandu;
using kandu::test::values;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.widths = {2, 4};
  c.bottleneck = 8;
  c.seed = 5;
  return c;
}

TrainConfig quick_config(std::size_t epochs = 4) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 2;
  c.seed = 9;
  return c;
}

std::vector<std::vector<float>> snapshot(KanduNet<float>& m) {
  std::vector<std::vector<float>> out;
  for (const auto& p : m.parameters()) out.push_back(values(p.tensor));
  return out;
}

}  // namespace

TEST(LrSchedule, TableDefaults) {
  TrainConfig c;
  c.epochs = 100;
  const auto e0 = lr_schedule(0, c);
  EXPECT_DOUBLE_EQ(e0.main, 0.001);
  EXPECT_DOUBLE_EQ(e0.aux, 0.01);
  const auto e50 = lr_schedule(50, c);
  EXPECT_NEAR(e50.main, 0.0001, 1e-18);
  EXPECT_NEAR(e50.aux, 0.001, 1e-18);
  const auto e75 = lr_schedule(75, c);
  EXPECT_NEAR(e75.main, 0.00001, 1e-18);
  EXPECT_NEAR(e75.aux, 0.0001, 1e-18);
  const auto e49 = lr_schedule(49, c);
  EXPECT_DOUBLE_EQ(e49.main, 0.001);
}

TEST(LrSchedule, NonIncreasing) {
  TrainConfig c;
  c.epochs = 37;
  auto prev = lr_schedule(0, c);
  for (std::size_t e = 1; e < c.epochs; ++e) {
    const auto cur = lr_schedule(e, c);
    EXPECT_LE(cur.main, prev.main);
    EXPECT_LE(cur.aux, prev.aux);
    prev = cur;
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.aux_loss_weight = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.main_lr = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Batches, StackInNchwOrder) {
  Sample s;
  s.width = 2;
  s.height = 1;
  s.image = {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f};
  s.mask = {0, 1};
  const auto x = image_batch<float>({s}, {0});
  EXPECT_EQ(x.shape(), (Shape{1, 3, 1, 2}));
  EXPECT_EQ(values(x), (std::vector<float>{0.1f, 0.4f, 0.2f, 0.5f, 0.3f, 0.6f}));
  const auto y = mask_batch<float>({s}, {0});
  EXPECT_EQ(values(y), (std::vector<float>{0, 1}));
}

TEST(TrainEpoch, ZeroLearningRatesLeaveParameters) {
  auto cfg = quick_config();
  cfg.main_lr = cfg.aux_lr = 0.0;
  cfg.weight_decay = 0.0;
  Trainer<float> tr(tiny_config(), cfg);
  const auto data = synth_generate(4, 16, 1);
  const auto before = snapshot(tr.model);
  const auto log = train_epoch(tr, data, 0);
  EXPECT_TRUE(std::isfinite(log.mean_loss));
  EXPECT_EQ(log.batch_losses.size(), 2u);
  EXPECT_EQ(snapshot(tr.model), before);
}

TEST(TrainEpoch, SameSeedSameLogs) {
  const auto data = synth_generate(5, 16, 2);
  auto run = [&] {
    Trainer<float> tr(tiny_config(), quick_config());
    std::vector<EpochLog> logs;
    for (std::size_t e = 0; e < 3; ++e) logs.push_back(train_epoch(tr, data, e));
    return std::make_pair(logs, snapshot(tr.model));
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(TrainEpoch, DifferentSeedDifferentOrder) {
  const auto data = synth_generate(6, 16, 2);
  auto c1 = quick_config(), c2 = quick_config();
  c2.seed = c1.seed + 1;
  Trainer<float> a(tiny_config(), c1), b(tiny_config(), c2);
  EXPECT_NE(train_epoch(a, data, 0).batch_losses, train_epoch(b, data, 0).batch_losses);
}

TEST(TrainEpoch, SingleSampleOverfits) {
  const auto data = synth_generate(1, 16, 3);
  auto cfg = quick_config(200);
  cfg.batch_size = 1;
  cfg.augment = false;
  Trainer<float> tr(tiny_config(), cfg);
  const double initial = train_epoch(tr, data, 0).mean_loss;
  double last = initial;
  for (std::size_t e = 1; e < cfg.epochs; ++e) last = train_epoch(tr, data, e).mean_loss;
  EXPECT_LT(last, initial);
  EXPECT_LT(last, 0.5 * initial);
}

TEST(TrainEpoch, EmptyDatasetRejected) {
  Trainer<float> tr(tiny_config(), quick_config());
  EXPECT_THROW(train_epoch(tr, {}, 0), std::invalid_argument);
}

TEST(TrainEpoch, NonFiniteLossNamesBatch) {
  Trainer<float> tr(tiny_config(), quick_config());
  auto data = synth_generate(4, 16, 4);
  data[0].image[0] = data[1].image[0] = data[2].image[0] = data[3].image[0] = std::nanf("");
  try {
    train_epoch(tr, data, 0);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos) << e.what();
  }
}

TEST(Evaluate, ReportPerImage) {
  auto m = build_model<float>(tiny_config());
  const auto data = synth_generate(5, 16, 6);
  const auto report = evaluate(m, data, 2);
  EXPECT_EQ(report.iou.size(), 5u);
  EXPECT_EQ(report.dice.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_GE(report.iou[i], 0.0);
    EXPECT_LE(report.iou[i], report.dice[i]);
  }
  const auto again = evaluate(m, data, 3);
  EXPECT_EQ(report.format(), again.format());
}

TEST(Predict, EvalModeRestoredAndInRange) {
  auto m = build_model<float>(tiny_config());
  const auto data = synth_generate(3, 16, 7);
  const auto probs = predict(m, data, 2);
  ASSERT_EQ(probs.size(), 3u);
  for (const auto& p : probs) {
    EXPECT_EQ(p.size(), 256u);
    for (float v : p) {
      EXPECT_GT(v, 0.0f);
      EXPECT_LT(v, 1.0f);
    }
  }
  EXPECT_EQ(m.mode(), Mode::train);
}
