#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "asl/model.hpp"
#include "asl/ops.hpp"
#include "asl/optim.hpp"
#include "test_util.hpp"

namespace asl {
namespace {

ModelConfig config(std::size_t classes, std::uint64_t seed = 0) {
  ModelConfig cfg;
  cfg.num_classes = classes;
  cfg.seed = seed;
  return cfg;
}

TEST(Model, ThirtyClassTotalsAndShapes) {
  Model<float> m(config(30));
  ModelSummary s = m.summary();
  EXPECT_EQ(m.layer_count(), 13u);
  EXPECT_EQ(s.total, 2029470u);
  EXPECT_EQ(s.trainable, 2029150u);
  EXPECT_EQ(s.non_trainable, 320u);
  const std::vector<Shape> shapes{{50, 50, 3},   {48, 48, 32},  {48, 48, 32}, {46, 46, 64},
                                  {44, 44, 128}, {22, 22, 128}, {22, 22, 128}, {22, 22, 128},
                                  {20, 20, 256}, {10, 10, 256}, {25600},      {64},
                                  {30}};
  ASSERT_EQ(s.rows.size(), shapes.size());
  for (std::size_t i = 0; i < shapes.size(); ++i) EXPECT_EQ(s.rows[i].output_shape, shapes[i]);
}

TEST(Model, SummaryRowsMatchTable) {
  ModelSummary s = Model<float>(config(30)).summary();
  // Rows counted from 1 with the input row first.
  EXPECT_EQ(s.rows[1].layer, "Conv2D");
  EXPECT_EQ(format_batch_shape(s.rows[1].output_shape), "(None, 48, 48, 32)");
  EXPECT_EQ(s.rows[1].params, 896u);
  EXPECT_EQ(s.rows[7].layer, "Batch Normalization");
  EXPECT_EQ(format_batch_shape(s.rows[7].output_shape), "(None, 22, 22, 128)");
  EXPECT_EQ(s.rows[7].params, 512u);
  EXPECT_EQ(s.rows[11].layer, "Dense");
  EXPECT_EQ(format_batch_shape(s.rows[11].output_shape), "(None, 64)");
  EXPECT_EQ(s.rows[11].params, 1638464u);
  EXPECT_EQ(s.rows[12].params, 1950u);
}

TEST(Model, TwentyNineClassOutputLayer) {
  ModelSummary s = Model<float>(config(29)).summary();
  EXPECT_EQ(s.rows.back().params, 1885u);
  EXPECT_EQ(s.rows.back().output_shape, (Shape{29}));
}

TEST(Model, InvalidConfigIsConfigError) {
  ModelConfig cfg = config(1);
  EXPECT_THROW(Model<float>{cfg}, ConfigError);
  cfg = config(29);
  cfg.input_h = 20;
  EXPECT_THROW(Model<float>{cfg}, ConfigError);
}

TEST(Model, SameSeedSameWeights) {
  Model<float> a(config(29, 4)), b(config(29, 4)), c(config(29, 5));
  auto sa = a.state(), sb = b.state(), sc = c.state();
  ASSERT_EQ(sa.size(), sb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    EXPECT_EQ(*sa[i].value, *sb[i].value) << sa[i].name;
    any_diff = any_diff || !(*sa[i].value == *sc[i].value);
  }
  EXPECT_TRUE(any_diff);
}

class ModelForward : public ::testing::Test {
 protected:
  Model<float> model{config(30, 1)};
  Rng rng{2};
  Tensor x = uniform<float>(rng, 0.0f, 1.0f, {2, 50, 50, 3});
};

TEST_F(ModelForward, ShapeAndRowSums) {
  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    Tensor p = model.forward(x, mode, rng);
    ASSERT_EQ(p.shape(), (Shape{2, 30}));
    for (std::size_t n = 0; n < 2; ++n) {
      double s = 0;
      for (std::size_t c = 0; c < 30; ++c) s += p.at({n, c});
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST_F(ModelForward, EvalIsDeterministic) {
  EXPECT_EQ(model.predict(x), model.predict(x));
}

TEST_F(ModelForward, FreshModelLossNearLogC) {
  model.predict(x);
  std::vector<std::size_t> labels{3, 17};
  auto r = crossentropy_from_logits(model.logits(), one_hot<float>(labels, 30));
  EXPECT_NEAR(r.loss, std::log(30.0), 0.1 * std::log(30.0));
}

TEST_F(ModelForward, WrongInputShapeIsShapeError) {
  EXPECT_THROW(model.predict(Tensor({2, 48, 48, 3})), ShapeError);
  EXPECT_THROW(model.predict(Tensor({2, 50, 50, 1})), ShapeError);
}

TEST_F(ModelForward, BackwardNeedsTrainForward) {
  EXPECT_THROW(model.backward(Tensor({2, 30})), StateError);
  model.predict(x);
  EXPECT_THROW(model.backward(Tensor({2, 30})), StateError);
}

TEST_F(ModelForward, ZeroUpstreamGivesZeroGradients) {
  model.forward(x, Mode::kTrain, rng);
  auto grads = model.backward(Tensor({2, 30}));
  EXPECT_EQ(grads.size(), 16u);
  for (const auto& g : grads) {
    EXPECT_EQ(g.grad->shape(), g.value->shape()) << g.name;
    for (float v : g.grad->values()) ASSERT_EQ(v, 0.0f) << g.name;
  }
}

TEST_F(ModelForward, RmsPropStepDecreasesBatchLoss) {
  std::vector<std::size_t> labels{3, 17};
  Tensor y = one_hot<float>(labels, 30);
  Rng drop(9);
  model.freeze_dropout_masks(false);
  // Dropout makes train-mode loss noisy; measure the loss in eval mode.
  model.predict(x);
  const double before = crossentropy_from_logits(model.logits(), y).loss;
  model.forward(x, Mode::kTrain, drop);
  auto lg = crossentropy_from_logits(model.logits(), y);
  auto params = model.backward(lg.grad_logits);
  Optimizer<float> opt(OptimizerKind::kRmsProp, 1e-4);
  opt.step(params);
  model.predict(x);
  EXPECT_LT(crossentropy_from_logits(model.logits(), y).loss, before);
}

TEST(Weights, RoundTripIsBitwise) {
  test::TempDir dir("weights");
  Model<float> m(config(29, 3));
  Rng r(4);
  Tensor x = uniform<float>(r, 0.0f, 1.0f, {2, 50, 50, 3});
  m.forward(x, Mode::kTrain, r);  // moves the BN moving statistics off their init values
  const auto path = dir / "m.aslw";
  save_weights(m, path);
  Model<float> back = load_weights(path, config(29));
  auto a = m.state(), b = back.state();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(*a[i].value, *b[i].value) << a[i].name;
  }
  EXPECT_EQ(m.predict(x), back.predict(x));
  EXPECT_EQ(peek_weights_num_classes(path), 29u);
}

TEST(Weights, ClassCountMismatchNamesFinalDense) {
  test::TempDir dir("weights");
  Model<float> m(config(29));
  save_weights(m, dir / "m.aslw");
  try {
    load_weights(dir / "m.aslw", config(30));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("dense2"), std::string::npos) << e.what();
  }
}

TEST(Weights, FileSizeFollowsFormat) {
  test::TempDir dir("weights");
  Model<float> m(config(30));
  save_weights(m, dir / "m.aslw");
  std::uintmax_t expect = 4 + 4 + 4 + 4;
  std::size_t payload = 0;
  for (const auto& s : m.state()) {
    expect += 2 + s.name.size() + 1 + 4 * s.value->rank() + 1 + 4 * s.value->size();
    payload += s.value->size();
  }
  EXPECT_EQ(payload, 2029470u);
  EXPECT_EQ(std::filesystem::file_size(dir / "m.aslw"), expect);
}

TEST(Weights, CorruptFilesAreFormatErrors) {
  test::TempDir dir("weights");
  Model<float> m(config(29));
  const auto path = dir / "m.aslw";
  save_weights(m, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 10);
  EXPECT_THROW(load_weights(path, config(29)), FormatError);
  {
    std::ofstream(dir / "bad.aslw") << "NOPE and some more bytes here";
  }
  EXPECT_THROW(load_weights(dir / "bad.aslw", config(29)), FormatError);
}

}  // namespace
}  // namespace asl
