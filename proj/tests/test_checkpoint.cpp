#include <gtest/gtest.h>

#include "kandu/checkpoint.hpp"
#include "kandu/train.hpp"
#include "test_util.hpp"

using namespace kandu;
using kandu::test::TempDir;
using kandu::test::random_tensor;
using kandu::test::values;

namespace {

ModelConfig tiny_config(std::vector<std::size_t> widths = {2, 4}) {
  ModelConfig c;
  c.widths = std::move(widths);
  c.bottleneck = 8;
  c.seed = 17;
  return c;
}

/// A trainer after two epochs, so moments and running statistics are non-trivial.
Trainer<float> trained() {
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 2;
  Trainer<float> tr(tiny_config(), tc);
  const auto data = synth_generate(4, 16, 3);
  train_epoch(tr, data, 0);
  train_epoch(tr, data, 1);
  return tr;
}

}  // namespace

TEST(Checkpoint, HeaderLayout) {
  auto tr = trained();
  const auto bytes = serialize_checkpoint(capture_checkpoint(tr.model, &tr.optimizer));
  ASSERT_GT(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "KANDUCKP");
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[9] | bytes[10] | bytes[11], 0);
}

TEST(Checkpoint, SaveLoadSaveByteIdentical) {
  TempDir dir("ckpt");
  auto tr = trained();
  auto ckpt = capture_checkpoint(tr.model, &tr.optimizer);
  ckpt.epoch = 2;
  ckpt.train_seed = 42;
  ckpt.best_metric = 0.625;
  save_checkpoint(dir / "a.ckpt", ckpt);
  save_checkpoint(dir / "b.ckpt", load_checkpoint(dir / "a.ckpt"));
  EXPECT_EQ(test::read_file(dir / "a.ckpt"), test::read_file(dir / "b.ckpt"));
  const auto back = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back.epoch, 2u);
  EXPECT_EQ(back.train_seed, 42u);
  EXPECT_EQ(back.best_metric, 0.625);
  EXPECT_EQ(back.model, ckpt.model);
  EXPECT_EQ(back.tensors, ckpt.tensors);
  EXPECT_EQ(back.optimizer_steps, tr.optimizer.step_count());
}

TEST(Checkpoint, RestoreGivesIdenticalPredictions) {
  auto tr = trained();
  const auto ckpt = deserialize_checkpoint(serialize_checkpoint(capture_checkpoint(tr.model)));
  auto fresh = build_model<float>(tiny_config());
  restore_checkpoint(ckpt, fresh);
  Rng rng(5);
  auto x = random_tensor<float>({2, 3, 16, 16}, rng, 0, 1);
  NoGradGuard g;
  EXPECT_EQ(values(model_forward(tr.model, x, Mode::eval)), values(model_forward(fresh, x, Mode::eval)));
}

TEST(Checkpoint, RestoredOptimizerContinuesIdentically) {
  const auto data = synth_generate(4, 16, 3);
  auto a = trained();
  const auto ckpt = deserialize_checkpoint(serialize_checkpoint(capture_checkpoint(a.model, &a.optimizer)));
  TrainConfig tc = a.cfg;
  Trainer<float> b(tiny_config(), tc);
  restore_checkpoint(ckpt, b.model, &b.optimizer);
  EXPECT_EQ(train_epoch(a, data, 2), train_epoch(b, data, 2));
}

TEST(Checkpoint, ShapeMismatchListsTensors) {
  auto tr = trained();
  const auto ckpt = capture_checkpoint(tr.model);
  auto other = build_model<float>(tiny_config({2, 6}));
  try {
    restore_checkpoint(ckpt, other);
    FAIL();
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("in checkpoint vs"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,"), std::string::npos) << msg;
  }
}

TEST(Checkpoint, TruncatedAndTrailingBytesRejected) {
  auto tr = trained();
  auto bytes = serialize_checkpoint(capture_checkpoint(tr.model));
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  EXPECT_THROW(deserialize_checkpoint(cut), std::runtime_error);
  bytes.push_back(0);
  EXPECT_THROW(deserialize_checkpoint(bytes), std::runtime_error);
  std::vector<std::uint8_t> wrong(bytes);
  wrong[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(wrong), std::runtime_error);
}

TEST(Checkpoint, MissingFileNamesPath) {
  try {
    load_checkpoint("/nonexistent/q.ckpt");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("q.ckpt"), std::string::npos);
  }
}
