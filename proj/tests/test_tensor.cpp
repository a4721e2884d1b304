#include <gtest/gtest.h>

#include <cmath>

#include "kandu/grad_check.hpp"
#include "kandu/losses.hpp"
#include "kandu/nn.hpp"
#include "kandu/ops.hpp"
#include "test_util.hpp"

using namespace kandu;
using kandu::test::random_tensor;
using kandu::test::values;

TEST(Tensor, ShapeAndElementCount) {
  Tensor<float> t(Shape{2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.dim(), 3u);
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), std::invalid_argument);
}

TEST(Tensor, ItemNeedsSingleElement) {
  EXPECT_FLOAT_EQ(Tensor<float>::scalar(2.5f).item(), 2.5f);
  EXPECT_THROW(Tensor<float>(Shape{2}).item(), std::invalid_argument);
}

TEST(Elementwise, AddComponentwise) {
  Tensor<double> a(Shape{2}, {1, 2}), b(Shape{2}, {3, 4});
  EXPECT_EQ(values(add(a, b)), (std::vector<double>{4, 6}));
}

TEST(Elementwise, MulByZeroScalar) {
  Rng rng(1);
  auto x = random_tensor<double>({3, 4}, rng);
  auto y = x * 0.0;
  EXPECT_EQ(y.shape(), x.shape());
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Elementwise, ProductRule) {
  Tensor<double> x(Shape{}, {2.0}), y(Shape{}, {3.0});
  x.set_requires_grad(true);
  y.set_requires_grad(true);
  backward(mul(x, y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(y.grad()[0], 2.0);
}

TEST(Elementwise, ShapeMismatchNamesBothShapes) {
  Tensor<double> a(Shape{2, 3}), b(Shape{3, 2});
  try {
    add(a, b);
    FAIL();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3,2]"), std::string::npos) << msg;
  }
}

TEST(Elementwise, ScalarOperandsMatchClosedForm) {
  Tensor<double> a(Shape{3}, {1, -2, 4});
  EXPECT_EQ(values(a + 1.0), (std::vector<double>{2, -1, 5}));
  EXPECT_EQ(values(a - 1.0), (std::vector<double>{0, -3, 3}));
  EXPECT_EQ(values(a / 2.0), (std::vector<double>{0.5, -1, 2}));
  EXPECT_EQ(values(unary(UnaryOp::neg, a)), (std::vector<double>{-1, 2, -4}));
  EXPECT_EQ(values(unary(UnaryOp::square, a)), (std::vector<double>{1, 4, 16}));
}

TEST(Concat, ShapeArithmetic) {
  Tensor<float> a(Shape{1, 3, 4, 4}), b(Shape{1, 5, 4, 4});
  EXPECT_EQ(concat_channels(a, b).shape(), (Shape{1, 8, 4, 4}));
}

TEST(Concat, EmptyChannelTensorIsIdentity) {
  Rng rng(2);
  auto x = random_tensor<float>({2, 3, 2, 2}, rng);
  Tensor<float> empty(Shape{2, 0, 2, 2});
  auto y = concat_channels(x, empty);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(values(y), values(x));
}

TEST(Concat, BackwardSplitsOnes) {
  Rng rng(3);
  auto a = random_tensor<double>({1, 2, 3, 3}, rng);
  auto b = random_tensor<double>({1, 4, 3, 3}, rng);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  backward(sum(concat_channels(a, b)));
  for (double g : a.grad()) EXPECT_EQ(g, 1.0);
  for (double g : b.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Concat, SpatialMismatchRejected) {
  Tensor<float> a(Shape{1, 3, 4, 4}), b(Shape{1, 3, 4, 2});
  EXPECT_THROW(concat_channels(a, b), std::invalid_argument);
  Tensor<float> c(Shape{2, 3, 4, 4});
  EXPECT_THROW(concat_channels(a, c), std::invalid_argument);
}

TEST(Concat, SliceRecoversBothInputs) {
  Rng rng(4);
  auto a = random_tensor<float>({2, 3, 4, 5}, rng);
  auto b = random_tensor<float>({2, 2, 4, 5}, rng);
  auto c = concat_channels(a, b);
  EXPECT_EQ(values(slice_channels(c, 0, 3)), values(a));
  EXPECT_EQ(values(slice_channels(c, 3, 2)), values(b));
}

TEST(Reduce, SumAll) {
  Tensor<double> x(Shape{2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(sum(x).item(), 10.0);
}

TEST(Reduce, MeanOfConstant) {
  Tensor<double> x(Shape{3, 5}, 2.75);
  EXPECT_DOUBLE_EQ(mean(x).item(), 2.75);
}

TEST(Reduce, AxesKeepRemainingShape) {
  Tensor<double> x(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  auto s0 = sum(x, {0});
  EXPECT_EQ(s0.shape(), (Shape{3}));
  EXPECT_EQ(values(s0), (std::vector<double>{5, 7, 9}));
  auto m1 = mean(x, {1});
  EXPECT_EQ(values(m1), (std::vector<double>{2, 5}));
}

TEST(Reduce, SumGradientIsOnes) {
  Rng rng(5);
  auto x = random_tensor<double>({3, 4}, rng);
  x.set_requires_grad(true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Reduce, InvalidAxisRejected) {
  Tensor<double> x(Shape{2, 3});
  EXPECT_THROW(sum(x, {2}), std::invalid_argument);
  EXPECT_THROW(sum(x, {0, 0}), std::invalid_argument);
}

TEST(Backward, SumOfSquares) {
  Tensor<double> x(Shape{3}, {1, -2, 3});
  x.set_requires_grad(true);
  backward(sum(mul(x, x)));
  EXPECT_EQ(test::grads(x), (std::vector<double>{2, -4, 6}));
}

TEST(Backward, IndependentLeafGetsZero) {
  Tensor<double> x(Shape{2}, {1, 2}), y(Shape{2}, {3, 4});
  x.set_requires_grad(true);
  y.set_requires_grad(true);
  auto unused = y + 1.0;
  backward(sum(x));
  for (double g : y.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NonScalarLossRejected) {
  Tensor<double> x(Shape{2}, {1, 2});
  x.set_requires_grad(true);
  EXPECT_THROW(backward(x * 2.0), std::invalid_argument);
}

TEST(Backward, ConsumedGraphRejected) {
  Tensor<double> x(Shape{2}, {1, 2});
  x.set_requires_grad(true);
  auto loss = sum(mul(x, x));
  backward(loss);
  EXPECT_THROW(backward(loss), std::logic_error);
}

TEST(Backward, DetachedBranchContributesNothing) {
  Tensor<double> x(Shape{2}, {1, 2});
  x.set_requires_grad(true);
  auto loss = sum(add(x, mul(x.detach(), x.detach())));
  backward(loss);
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Tensor<double> x(Shape{2}, {1, 2});
  x.set_requires_grad(true);
  NoGradGuard guard;
  auto y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.is_leaf());
}

TEST(Forward, BitIdenticalAcrossRuns) {
  auto run = [] {
    Rng rng(6);
    auto x = random_tensor<float>({2, 3, 8, 8}, rng);
    auto p = make_conv<float>(3, 4, 3, 1, rng);
    return values(sum(silu(conv2d(x, p)), {0, 2, 3}));
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, LinearFunctionIsExact) {
  Rng rng(7);
  auto x = random_tensor<double>({4, 5}, rng);
  const auto r = grad_check([&] { return sum(x); }, {x});
  EXPECT_LT(r.max_relative_error, 1e-10);
}

TEST(GradCheck, SiluOfConv) {
  Rng rng(8);
  auto x = random_tensor<double>({1, 2, 5, 5}, rng);
  auto p = make_conv<double>(2, 3, 3, 1, rng);
  const auto r = grad_check([&] { return sum(silu(conv2d(x, p))); }, {x, p.weight, p.bias});
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(GradCheck, BceOfSigmoid) {
  Rng rng(9);
  auto x = random_tensor<double>({2, 1, 4, 4}, rng, -2, 2);
  Tensor<double> y(Shape{2, 1, 4, 4});
  for (auto& v : y.mutable_data()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  const auto r = grad_check([&] { return bce_loss(sigmoid(x), y); }, {x});
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(GradCheck, CompositeGraph) {
  Rng rng(10);
  auto a = random_tensor<double>({2, 3}, rng, 0.5, 2.0);
  auto b = random_tensor<double>({2, 3}, rng, 0.5, 2.0);
  const auto r = grad_check(
      [&] {
        auto t = div(unary(UnaryOp::log, a), add(b, unary(UnaryOp::sqrt, a)));
        return mean(mul(unary(UnaryOp::exp, t), sub(a, b)));
      },
      {a, b});
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(GradCheck, DetectsWrongGradient) {
  kandu::testing::set_corrupt_relu_backward(true);
  Rng rng(11);
  auto x = random_tensor<double>({3, 3}, rng, 0.2, 1.0);
  const auto r = grad_check([&] { return sum(relu(x)); }, {x});
  kandu::testing::set_corrupt_relu_backward(false);
  EXPECT_GT(r.max_relative_error, 1e-3);
}

TEST(GradCheck, NonFiniteObjectiveReported) {
  Tensor<double> x(Shape{2}, {1.0, 1e-6});
  EXPECT_THROW(grad_check([&] { return sum(unary(UnaryOp::log, x)); }, {x}), std::runtime_error);
}

TEST(GradCheck, InputsRestoredAfterSweep) {
  Rng rng(12);
  auto x = random_tensor<double>({5}, rng);
  const auto before = values(x);
  grad_check([&] { return sum(mul(x, x)); }, {x});
  EXPECT_EQ(values(x), before);
}
