#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "asl/dataset.hpp"
#include "asl/trainer.hpp"
#include "test_util.hpp"

namespace asl {
namespace {

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig small_config(std::size_t classes) {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.num_classes = classes;
  cfg.seed = 3;
  cfg.record_wall_time = false;
  return cfg;
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_DOUBLE_EQ(cfg.lr(), 0.001);
  cfg.optimizer = OptimizerKind::kAdam;
  EXPECT_DOUBLE_EQ(cfg.lr(), 0.01);
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.learning_rate = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Train, RejectsBadInputs) {
  Dataset ds = make_synthetic_dataset(3, 4, 1);
  auto all = iota(ds.size());
  TrainConfig cfg = small_config(3);
  EXPECT_THROW(train(cfg, ds, {}, {}), ConfigError);
  cfg.batch_size = 13;
  EXPECT_THROW(train(cfg, ds, all, {}), ConfigError);
  cfg = small_config(4);
  EXPECT_THROW(train(cfg, ds, all, {}), ConfigError);
  cfg = small_config(3);
  std::vector<std::size_t> bad{0, 99};
  EXPECT_THROW(train(cfg, ds, bad, {}), ConfigError);
}

TEST(Train, SameSeedGivesBitwiseIdenticalArtifacts) {
  Dataset ds = make_synthetic_dataset(4, 6, 2);
  Manifest m = split_dataset(ds, {}, 2);
  auto tr = m.indices(Split::kTrain), va = m.indices(Split::kVal);
  test::TempDir a("run_a"), b("run_b");
  TrainConfig cfg = small_config(4);
  cfg.out_dir = a.path();
  cfg.checkpoint_every = 1;
  TrainResult ra = train(cfg, ds, tr, va);
  cfg.out_dir = b.path();
  TrainResult rb = train(cfg, ds, tr, va);
  EXPECT_EQ(slurp(a / "model.aslw"), slurp(b / "model.aslw"));
  EXPECT_EQ(slurp(a / "history.csv"), slurp(b / "history.csv"));
  EXPECT_TRUE(std::filesystem::exists(a / "checkpoint_epoch0001.aslw"));
  EXPECT_TRUE(std::filesystem::exists(a / "checkpoint_epoch0002.aslw"));
  ASSERT_EQ(ra.history.size(), 2u);
  EXPECT_TRUE(ra.history[0].val_acc.has_value());
  EXPECT_EQ(ra.history[1].epoch, 2u);
  EXPECT_EQ(ra.history[0].seconds, 0.0);

  cfg.seed = 4;
  cfg.out_dir.clear();
  TrainResult rc = train(cfg, ds, tr, va);
  EXPECT_NE(ra.history[1].train_loss, rc.history[1].train_loss);
}

TEST(Train, EpochCallbackCanStopEarly) {
  Dataset ds = make_synthetic_dataset(2, 4, 1);
  TrainConfig cfg = small_config(2);
  cfg.epochs = 10;
  cfg.on_epoch = [](const EpochRecord& r) { return r.epoch < 3; };
  EXPECT_EQ(train(cfg, ds, iota(ds.size()), {}).history.size(), 3u);
}

TEST(History, CsvLayout) {
  test::TempDir dir("hist");
  std::vector<EpochRecord> h{{1, 0.5, 0.25, 0.75, 0.5, 0.0}, {2, 0.125, 1.0, std::nullopt, std::nullopt, 1.5}};
  write_history_csv(h, dir / "h.csv");
  EXPECT_EQ(slurp(dir / "h.csv"),
            "epoch,train_loss,train_acc,val_loss,val_acc,seconds\n"
            "1,0.5,0.25,0.75,0.5,0\n"
            "2,0.125,1,,,1.5\n");
}

TEST(Evaluate, ZeroOutputLayerGivesUniformPredictions) {
  Dataset ds = make_synthetic_dataset(4, 3, 5);
  ModelConfig mc;
  mc.num_classes = 4;
  Model<float> model(mc);
  for (auto& p : model.parameters())
    if (p.name.rfind("dense2", 0) == 0) p.value->fill(0.0f);
  EvalResult r = evaluate(model, ds, 5);
  EXPECT_NEAR(r.loss, std::log(4.0), 1e-6);
  EXPECT_NEAR(r.metrics.accuracy, 0.25, 1e-12);  // every tie resolves to class 0
  EXPECT_EQ(r.confusion.col_sum(0), ds.size());
  auto preds = predict_top_k(model, ds.samples[0].image, 4);
  for (const auto& p : preds) EXPECT_NEAR(p.probability, 0.25, 1e-7);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(preds[i].label, i);
}

TEST(Evaluate, RepeatableAndConsistentWithMetrics) {
  Dataset ds = make_synthetic_dataset(3, 4, 6);
  ModelConfig mc;
  mc.num_classes = 3;
  Model<float> model(mc);
  EvalResult a = evaluate(model, ds, 5), b = evaluate(model, ds, 7);
  EXPECT_EQ(a.confusion, b.confusion);
  EXPECT_NEAR(a.loss, b.loss, 1e-6);
  EXPECT_DOUBLE_EQ(a.metrics.accuracy,
                   static_cast<double>(a.confusion.trace()) / a.confusion.total());
  EXPECT_THROW(evaluate(model, ds, std::span<const std::size_t>{}), InputError);
  mc.num_classes = 5;
  Model<float> wrong(mc);
  EXPECT_THROW(evaluate(wrong, ds), ConfigError);
}

TEST(Predict, TopKRanking) {
  Dataset ds = make_synthetic_dataset(5, 1, 7);
  ModelConfig mc;
  mc.num_classes = 5;
  mc.seed = 2;
  Model<float> model(mc);
  auto all = predict_top_k(model, ds.samples[2].image, 5, ds.class_names);
  double sum = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    sum += all[i].probability;
    if (i > 0) {
      EXPECT_GE(all[i - 1].probability, all[i].probability);
    }
    EXPECT_EQ(all[i].name, ds.class_names[all[i].label]);
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);
  Tensor batch = ds.samples[2].image.reshaped({1, 50, 50, 3});
  auto top1 = predict_top_k(model, ds.samples[2].image, 1);
  EXPECT_EQ(top1[0].label, argmax_rows(model.predict(batch))[0]);
  EXPECT_EQ(top1[0].name, std::to_string(top1[0].label));
  EXPECT_THROW(predict_top_k(model, ds.samples[2].image, 0), ParameterError);
  EXPECT_THROW(predict_top_k(model, ds.samples[2].image, 6), ParameterError);
}

TEST(Argmax, TiesGoLow) {
  EXPECT_EQ(argmax_rows(Tensor({2, 3}, {0.2f, 0.4f, 0.4f, 0.5f, 0.1f, 0.5f})),
            (std::vector<std::size_t>{1, 0}));
}

// The full synthetic fixture trained for 20 epochs without early stopping.
class OverfitRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ds_ = new Dataset(make_synthetic_dataset(8, 16, 0));
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 32;
    cfg.num_classes = 8;
    cfg.seed = 0;
    result_ = new TrainResult(train(cfg, *ds_, iota(ds_->size()), {}));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete ds_;
  }
  static Dataset* ds_;
  static TrainResult* result_;
};
Dataset* OverfitRun::ds_ = nullptr;
TrainResult* OverfitRun::result_ = nullptr;

TEST_F(OverfitRun, HistoryHasOneRowPerEpoch) {
  ASSERT_EQ(result_->history.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(result_->history[i].epoch, i + 1);
    EXPECT_GE(result_->history[i].train_loss, 0.0);
    EXPECT_FALSE(result_->history[i].val_loss.has_value());
  }
}

TEST_F(OverfitRun, MemorizesTheFixture) {
  EXPECT_EQ(result_->history.back().train_acc, 1.0);
  EXPECT_LT(result_->history.back().train_loss, 0.01);
}

TEST_F(OverfitRun, SmoothedLossIsNonIncreasing) {
  const auto& h = result_->history;
  std::vector<double> smooth;
  for (std::size_t k = 0; k + 10 <= h.size(); ++k) {
    double s = 0;
    for (std::size_t j = k; j < k + 10; ++j) s += h[j].train_loss;
    smooth.push_back(s / 10);
  }
  for (std::size_t k = 1; k < smooth.size(); ++k) EXPECT_LE(smooth[k], smooth[k - 1]) << k;
}

TEST_F(OverfitRun, EvaluatingTrainingSetIsPerfect) {
  EvalResult r = evaluate(result_->model, *ds_);
  EXPECT_EQ(r.metrics.accuracy, 1.0);
  EXPECT_EQ(r.confusion.trace(), r.confusion.total());
  EXPECT_EQ(r.metrics.macro_f1, 1.0);
}

}  // namespace
}  // namespace asl
