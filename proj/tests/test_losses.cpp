#include <gtest/gtest.h>

#include <cmath>

#include "kandu/grad_check.hpp"
#include "kandu/losses.hpp"
#include "kandu/nn.hpp"
#include "kandu/ops.hpp"
#include "test_util.hpp"

using namespace kandu;
using kandu::test::random_tensor;

namespace {

Tensor<double> binary_target(Shape s, Rng& rng, double p = 0.5) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.mutable_data()) v = rng.bernoulli(p) ? 1.0 : 0.0;
  return t;
}

}  // namespace

TEST(Bce, PerfectPrediction) {
  Rng rng(1);
  auto t = binary_target({2, 1, 4, 4}, rng);
  EXPECT_LE(bce_loss(t, t).item(), -std::log(1.0 - 1e-7) + 1e-15);
}

TEST(Bce, HalfEverywhereIsLog2) {
  Rng rng(2);
  auto t = binary_target({2, 1, 5, 5}, rng);
  Tensor<double> p(t.shape(), 0.5);
  EXPECT_NEAR(bce_loss(p, t).item(), std::log(2.0), 1e-15);
}

TEST(Bce, NonNegativeAndShapeChecked) {
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    auto p = random_tensor<double>({1, 1, 3, 3}, rng, 0, 1);
    EXPECT_GE(bce_loss(p, binary_target({1, 1, 3, 3}, rng)).item(), 0.0);
  }
  EXPECT_THROW(bce_loss(Tensor<double>(Shape{1, 1, 2, 2}), Tensor<double>(Shape{1, 1, 2, 3})),
               std::invalid_argument);
}

TEST(Bce, GradCheck) {
  Rng rng(4);
  auto p = random_tensor<double>({2, 1, 3, 3}, rng, 0.05, 0.95);
  auto t = binary_target({2, 1, 3, 3}, rng);
  EXPECT_LT(grad_check([&] { return bce_loss(p, t); }, {p}).max_relative_error, 1e-4);
}

TEST(Dice, PerfectPredictionIsZero) {
  Rng rng(5);
  auto t = binary_target({3, 1, 4, 4}, rng);
  EXPECT_EQ(dice_loss(t, t).item(), 0.0);
}

TEST(Dice, DisjointHundredPixels) {
  Tensor<double> p(Shape{1, 1, 20, 10}), t(Shape{1, 1, 20, 10});
  for (std::size_t i = 0; i < 100; ++i) p.mutable_data()[i] = 1.0;
  for (std::size_t i = 100; i < 200; ++i) t.mutable_data()[i] = 1.0;
  EXPECT_NEAR(dice_loss(p, t).item(), 1.0 - 1.0 / 201.0, 1e-15);
}

TEST(Dice, HalfOnAllOnes) {
  const double m = 64;
  Tensor<double> p(Shape{1, 1, 8, 8}, 0.5), t(Shape{1, 1, 8, 8}, 1.0);
  EXPECT_NEAR(dice_loss(p, t).item(), 1.0 - (m + 1.0) / (1.5 * m + 1.0), 1e-15);
}

TEST(Dice, AveragedPerImage) {
  // Image 0 perfect (loss 0), image 1 disjoint single pixels (1 - 1/3).
  Tensor<double> p(Shape{2, 1, 1, 2}, {1, 0, 1, 0}), t(Shape{2, 1, 1, 2}, {1, 0, 0, 1});
  EXPECT_NEAR(dice_loss(p, t).item(), 0.5 * (1.0 - 1.0 / 3.0), 1e-15);
}

TEST(Dice, RangeAndGradCheck) {
  Rng rng(6);
  for (int k = 0; k < 20; ++k) {
    auto p = random_tensor<double>({2, 1, 3, 3}, rng, 0, 1);
    const double d = dice_loss(p, binary_target({2, 1, 3, 3}, rng)).item();
    EXPECT_GE(d, 0.0);
    EXPECT_LT(d, 1.0);
  }
  auto p = random_tensor<double>({2, 1, 3, 3}, rng, 0.05, 0.95);
  auto t = binary_target({2, 1, 3, 3}, rng);
  EXPECT_LT(grad_check([&] { return dice_loss(p, t); }, {p}).max_relative_error, 1e-4);
}

TEST(TotalLoss, ZeroWeightIsBce) {
  Rng rng(7);
  auto p = random_tensor<double>({2, 1, 3, 3}, rng, 0.05, 0.95);
  auto t = binary_target({2, 1, 3, 3}, rng);
  EXPECT_EQ(total_loss(p, t, 0.0).item(), bce_loss(p, t).item());
}

TEST(TotalLoss, CombinesSubLosses) {
  // bce = log 2 with p = 0.5; the target below gives dice 1 - 5/7.
  Tensor<double> p(Shape{1, 1, 2, 2}, 0.5), t(Shape{1, 1, 2, 2}, {1, 1, 1, 1});
  const double dice = 1.0 - 5.0 / 7.0;
  EXPECT_NEAR(total_loss(p, t, 0.2).item(), std::log(2.0) + 0.2 * dice, 1e-15);
}

TEST(TotalLoss, GradientIsSumOfParts) {
  Rng rng(8);
  auto p = random_tensor<double>({2, 1, 4, 4}, rng, 0.05, 0.95);
  auto t = binary_target({2, 1, 4, 4}, rng);
  auto grad_of = [&](auto&& fn) {
    auto leaf = p.clone();
    leaf.set_requires_grad(true);
    backward(fn(leaf));
    return test::grads(leaf);
  };
  const auto gt = grad_of([&](const Tensor<double>& x) { return total_loss(x, t, 0.2); });
  const auto gb = grad_of([&](const Tensor<double>& x) { return bce_loss(x, t); });
  const auto gd = grad_of([&](const Tensor<double>& x) { return dice_loss(x, t); });
  for (std::size_t i = 0; i < gt.size(); ++i) EXPECT_NEAR(gt[i], gb[i] + 0.2 * gd[i], 1e-12);
}
