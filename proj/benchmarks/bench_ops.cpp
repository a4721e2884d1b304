#include <benchmark/benchmark.h>

#include "kandu/kan.hpp"
#include "kandu/nn.hpp"
#include "kandu/ops.hpp"
#include "kandu/train.hpp"

using namespace kandu;

namespace {

Tensor<float> noise(Shape shape, Rng& rng) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = float(rng.uniform(-1, 1));
  return Tensor<float>(std::move(shape), std::move(v));
}

void BM_Conv2d3x3(benchmark::State& state) {
  const auto c = std::size_t(state.range(0)), hw = std::size_t(state.range(1));
  Rng rng(1);
  auto x = noise({4, c, hw, hw}, rng);
  auto p = make_conv<float>(c, c, 3, 1, rng);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p).data().data());
  state.SetItemsProcessed(state.iterations() * 4 * std::int64_t(hw * hw));
}
BENCHMARK(BM_Conv2d3x3)->Args({16, 64})->Args({32, 32})->Args({64, 16});

void BM_Conv2dBackward(benchmark::State& state) {
  Rng rng(2);
  auto x = noise({4, 16, 64, 64}, rng);
  auto p = make_conv<float>(16, 16, 3, 1, rng);
  p.weight.set_requires_grad(true);
  x.set_requires_grad(true);
  for (auto _ : state) {
    auto loss = sum(conv2d(x, p));
    backward(loss);
    x.zero_grad();
    p.weight.zero_grad();
  }
}
BENCHMARK(BM_Conv2dBackward);

void BM_PixelwiseKan(benchmark::State& state) {
  const auto c = std::size_t(state.range(0));
  Rng rng(3);
  auto layer = make_kan_layer<float>(c, c, rng);
  auto x = noise({4, c, 64, 64}, rng);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(pixelwise_kan(x, layer).data().data());
  state.SetItemsProcessed(state.iterations() * 4 * 64 * 64);
}
BENCHMARK(BM_PixelwiseKan)->Arg(8)->Arg(16)->Arg(32);

void BM_TrainEpochTiny(benchmark::State& state) {
  ModelConfig mc;
  mc.widths = {8, 16};
  mc.bottleneck = 32;
  TrainConfig tc;
  tc.augment = false;
  const auto data = synth_generate(16, 64, 4);
  Trainer<float> tr(mc, tc);
  std::size_t epoch = 0;
  for (auto _ : state) benchmark::DoNotOptimize(train_epoch(tr, data, epoch++).mean_loss);
  state.SetItemsProcessed(state.iterations() * std::int64_t(data.size()));
}
BENCHMARK(BM_TrainEpochTiny)->Unit(benchmark::kMillisecond);

void BM_PredictDefault(benchmark::State& state) {
  auto model = build_model<float>(ModelConfig{});
  const auto data = synth_generate(1, 256, 5);
  for (auto _ : state) benchmark::DoNotOptimize(predict(model, data, 1).front().data());
}
BENCHMARK(BM_PredictDefault)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
