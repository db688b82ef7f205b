#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "asl/ops.hpp"
#include "asl/optim.hpp"
#include "test_util.hpp"

namespace asl {
namespace {

struct One {
  TensorD p, g;
  BasicTensor<double>* pp[1];
  const BasicTensor<double>* gp[1];
  One(double p0, double g0) : p({1}, p0), g({1}, g0) {
    pp[0] = &p;
    gp[0] = &g;
  }
  std::span<BasicTensor<double>* const> params() { return pp; }
  std::span<const BasicTensor<double>* const> grads() { return gp; }
};

TEST(Adam, HandEvaluatedFirstStep) {
  One s(0.5, 0.2);
  OptimizerState<double> st;
  adam_step(s.params(), s.grads(), st, AdamHyper{});
  EXPECT_EQ(st.step, 1u);
  EXPECT_NEAR(st.first_moment[0][0], 0.02, 1e-15);
  EXPECT_NEAR(st.second_moment[0][0], 4e-5, 1e-15);
  EXPECT_NEAR(s.p[0], 0.49, 1e-7);
}

TEST(Adam, ZeroGradientLeavesParams) {
  Rng r(1);
  TensorD p = uniform<double>(r, -1.0, 1.0, {3, 4}), before = p, g({3, 4});
  BasicTensor<double>* pp[] = {&p};
  const BasicTensor<double>* gp[] = {&g};
  OptimizerState<double> st;
  for (int i = 0; i < 5; ++i) adam_step<double>(pp, gp, st, AdamHyper{});
  EXPECT_EQ(p, before);
}

TEST(Adam, ConstantGradientStepApproachesAlpha) {
  One s(0.0, 3.0);
  OptimizerState<double> st;
  double prev = 0;
  for (int i = 0; i < 200; ++i) {
    prev = s.p[0];
    adam_step(s.params(), s.grads(), st, AdamHyper{});
  }
  EXPECT_NEAR(prev - s.p[0], 0.01, 1e-6);
  EXPECT_EQ(st.step, 200u);
}

TEST(Adam, ShapeMismatchIsStateError) {
  TensorD p({2}), g({3});
  BasicTensor<double>* pp[] = {&p};
  const BasicTensor<double>* gp[] = {&g};
  OptimizerState<double> st;
  EXPECT_THROW(adam_step<double>(pp, gp, st, AdamHyper{}), StateError);
  TensorD g2({2});
  const BasicTensor<double>* gp2[] = {&g2, &g2};
  EXPECT_THROW(adam_step<double>(pp, gp2, st, AdamHyper{}), StateError);
}

TEST(Adam, HyperValidation) {
  AdamHyper h;
  h.alpha = 0;
  EXPECT_THROW(h.validate(), ParameterError);
  h = AdamHyper{};
  h.beta1 = 1.0;
  EXPECT_THROW(h.validate(), ParameterError);
}

TEST(RmsProp, HandEvaluatedFirstStep) {
  One s(0.0, 1.0);
  OptimizerState<double> st;
  rmsprop_step(s.params(), s.grads(), st, RmsPropHyper{});
  EXPECT_NEAR(st.second_moment[0][0], 0.1, 1e-15);
  EXPECT_NEAR(-s.p[0], 0.0031623, 1e-7);
  EXPECT_TRUE(st.first_moment.empty());
}

TEST(RmsProp, ZeroGradientLeavesParams) {
  One s(0.7, 0.0);
  OptimizerState<double> st;
  rmsprop_step(s.params(), s.grads(), st, RmsPropHyper{});
  EXPECT_EQ(s.p[0], 0.7);
}

TEST(RmsProp, SteadyStateStepIsScaleInvariant) {
  RmsPropHyper h;
  h.epsilon = 1e-12;
  for (double c : {1e-3, 1.0, 1e3}) {
    One s(0.0, c);
    OptimizerState<double> st;
    double prev = 0;
    for (int i = 0; i < 300; ++i) {
      prev = s.p[0];
      rmsprop_step(s.params(), s.grads(), st, h);
    }
    EXPECT_NEAR(prev - s.p[0], 0.001, 1e-8) << c;
  }
}

TEST(RmsProp, ShapeMismatchIsStateError) {
  TensorD p({2}), g({1, 2});
  BasicTensor<double>* pp[] = {&p};
  const BasicTensor<double>* gp[] = {&g};
  OptimizerState<double> st;
  EXPECT_THROW(rmsprop_step<double>(pp, gp, st, RmsPropHyper{}), StateError);
}

TEST(Optimizers, QuadraticDescent) {
  // loss = (p - 3)^2, one step from p = 0 must reduce it.
  for (auto kind : {OptimizerKind::kRmsProp, OptimizerKind::kAdam}) {
    TensorD p({1}, 0.0), g({1}, 2.0 * (0.0 - 3.0));
    Optimizer<double> opt(kind, 1e-3);
    std::vector<ParamRef<double>> refs{{"p", &p, &g}};
    opt.step(refs);
    EXPECT_LT((p[0] - 3) * (p[0] - 3), 9.0);
    EXPECT_EQ(opt.state().step, 1u);
    for (const auto& v : opt.state().second_moment)
      for (double e : v.values()) EXPECT_GE(e, 0.0);
  }
}

TEST(Optimizers, ParseNames) {
  EXPECT_EQ(parse_optimizer("rmsprop"), OptimizerKind::kRmsProp);
  EXPECT_EQ(parse_optimizer("adam"), OptimizerKind::kAdam);
  EXPECT_EQ(optimizer_name(OptimizerKind::kAdam), "adam");
  EXPECT_THROW(parse_optimizer("sgd"), ConfigError);
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  TensorD logits({2, 30}, 0.7);
  std::vector<std::size_t> labels{3, 29};
  auto r = crossentropy_from_logits(logits, one_hot<double>(labels, 30));
  EXPECT_NEAR(r.loss, std::log(30.0), 1e-12);
  EXPECT_NEAR(r.loss, 3.40120, 1e-5);
}

TEST(CrossEntropy, PeakedLogitsGiveNearZero) {
  TensorD logits({1, 4}, 0.0);
  logits[2] = 200.0;
  std::vector<std::size_t> labels{2};
  auto r = crossentropy_from_logits(logits, one_hot<double>(labels, 4));
  EXPECT_GE(r.loss, 0.0);
  EXPECT_LT(r.loss, 1e-12);
}

TEST(CrossEntropy, FusedGradientMatchesFiniteDifferences) {
  Rng rng(2);
  TensorD z = uniform<double>(rng, -3.0, 3.0, {2, 5});
  std::vector<std::size_t> labels{1, 4};
  TensorD y = one_hot<double>(labels, 5);
  auto r = crossentropy_from_logits(z, y);
  double num2 = 0, diff2 = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    TensorD zp = z, zm = z;
    zp[i] += 1e-5;
    zm[i] -= 1e-5;
    const double fd =
        (crossentropy_from_logits(zp, y).loss - crossentropy_from_logits(zm, y).loss) / 2e-5;
    diff2 += (fd - r.grad_logits[i]) * (fd - r.grad_logits[i]);
    num2 += fd * fd;
  }
  EXPECT_LT(std::sqrt(diff2 / num2), 1e-5);
  for (std::size_t n = 0; n < 2; ++n) {
    double row = 0;
    for (std::size_t c = 0; c < 5; ++c) row += r.grad_logits.at({n, c});
    EXPECT_NEAR(row, 0.0, 1e-6);
  }
}

TEST(CrossEntropy, MalformedTargetsAreLabelErrors) {
  TensorD z({1, 3});
  EXPECT_THROW(crossentropy_from_logits(z, TensorD({1, 3}, {1, 1, 0})), LabelError);
  EXPECT_THROW(crossentropy_from_logits(z, TensorD({1, 3}, {0, 0, 0})), LabelError);
  EXPECT_THROW(crossentropy_from_logits(z, TensorD({1, 3}, {0.5, 0.5, 0})), LabelError);
  std::vector<std::size_t> bad{3};
  EXPECT_THROW(one_hot<double>(bad, 3), LabelError);
}

TEST(CrossEntropy, ShapeMismatchIsShapeError) {
  EXPECT_THROW(crossentropy_from_logits(TensorD({1, 3}), TensorD({1, 4})), ShapeError);
}

}  // namespace
}  // namespace asl
