#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "kandu/optim.hpp"
#include "test_util.hpp"

using namespace kandu;
using kandu::test::values;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.widths = {2, 4};
  c.bottleneck = 8;
  return c;
}

ParamGroup<double> single(Tensor<double>& t) { return {"g", {{"t", t}}}; }

}  // namespace

TEST(Partition, DisjointAndExhaustive) {
  auto m = build_model<float>(tiny_config());
  auto g = partition_params(m);
  EXPECT_EQ(g.main.params.size() + g.aux.params.size(), m.parameters().size());
  std::set<std::string> main, aux;
  for (const auto& p : g.main.params) main.insert(p.name);
  for (const auto& p : g.aux.params) aux.insert(p.name);
  for (const auto& n : aux) EXPECT_EQ(main.count(n), 0u) << n;
  for (const auto& p : m.parameters()) EXPECT_EQ(main.count(p.name) + aux.count(p.name), 1u);
}

TEST(Partition, AuxIsExactlyFusionParameters) {
  auto m = build_model<float>(tiny_config());
  auto g = partition_params(m);
  // 2 encoder + bottleneck + 2 decoder blocks, 8 fusion tensors each.
  EXPECT_EQ(g.aux.params.size(), 5u * 8u);
  std::set<const void*> expected;
  auto add = [&](FusionBlock<float>& f) {
    for (auto* t : {&f.conv3.weight, &f.conv3.bias, &f.bn1.gamma, &f.bn1.beta, &f.conv1.weight,
                    &f.conv1.bias, &f.bn2.gamma, &f.bn2.beta})
      expected.insert(t->impl_ptr().get());
  };
  for (auto& b : m.encoder()) add(b.fusion);
  add(m.bottleneck().fusion);
  for (auto& b : m.decoder()) add(b.fusion);
  std::set<const void*> got;
  for (const auto& p : g.aux.params) got.insert(p.tensor.impl_ptr().get());
  EXPECT_EQ(got, expected);
}

TEST(Adam, ZeroGradientNoDecayUnchanged) {
  Tensor<double> t(Shape{3}, {1, -2, 3});
  t.mutable_grad();  // zero gradient buffer
  auto g = single(t);
  Adam<double> opt;
  for (int k = 0; k < 3; ++k) opt.step({&g}, {0.1});
  EXPECT_EQ(values(t), (std::vector<double>{1, -2, 3}));
}

TEST(Adam, FirstStepMovesByLr) {
  Tensor<double> t(Shape{3}, {1, -2, 3});
  const std::vector<double> grad{0.5, -3.0, 1e-3};
  std::copy(grad.begin(), grad.end(), t.mutable_grad().begin());
  auto g = single(t);
  Adam<double> opt;
  const double lr = 0.01;
  opt.step({&g}, {lr});
  const std::vector<double> before{1, -2, 3};
  for (std::size_t i = 0; i < 3; ++i) {
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
    const double expected = lr * grad[i] / (std::abs(grad[i]) + 1e-8);
    EXPECT_NEAR(before[i] - t[i], expected, 1e-15);
  }
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(Adam, CoupledWeightDecay) {
  Tensor<double> t(Shape{1}, {2.0});
  t.mutable_grad()[0] = 0.0;
  auto g = single(t);
  AdamConfig cfg;
  cfg.weight_decay = 0.5;
  Adam<double> opt(cfg);
  opt.step({&g}, {0.1});
  // gradient becomes 0.5 * 2 = 1, first step moves by lr.
  EXPECT_NEAR(t[0], 2.0 - 0.1 * 1.0 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, NonFiniteGradientRejectedWithName) {
  Tensor<double> a(Shape{2}, {1, 2}), b(Shape{2}, {3, 4});
  a.mutable_grad()[0] = 1.0;
  b.mutable_grad()[1] = std::nan("");
  ParamGroup<double> g{"g", {{"alpha", a}, {"beta", b}}};
  Adam<double> opt;
  try {
    opt.step({&g}, {0.1});
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
  }
  EXPECT_EQ(values(a), (std::vector<double>{1, 2}));
  EXPECT_EQ(opt.step_count(), 0u);
}

TEST(Adam, GroupsUseOwnLearningRate) {
  Tensor<double> a(Shape{1}, {0.0}), b(Shape{1}, {0.0});
  a.mutable_grad()[0] = 1.0;
  b.mutable_grad()[0] = 1.0;
  ParamGroup<double> ga{"a", {{"a", a}}}, gb{"b", {{"b", b}}};
  Adam<double> opt;
  opt.step({&ga, &gb}, {0.001, 0.01});
  EXPECT_NEAR(a[0], -0.001, 1e-10);
  EXPECT_NEAR(b[0], -0.01, 1e-10);
  EXPECT_THROW(opt.step({&ga, &gb}, {0.001}), std::invalid_argument);
}

TEST(Adam, DeterministicTenSteps) {
  auto run = [] {
    Tensor<double> t(Shape{4}, {0.1, 0.2, -0.3, 0.4});
    auto g = single(t);
    Adam<double> opt;
    for (int k = 0; k < 10; ++k) {
      auto gr = t.mutable_grad();
      for (std::size_t i = 0; i < 4; ++i) gr[i] = std::sin(double(k) + t[i]);
      opt.step({&g}, {0.05});
    }
    return values(t);
  };
  EXPECT_EQ(run(), run());
}
