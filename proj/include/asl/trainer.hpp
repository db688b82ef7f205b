#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "asl/dataset.hpp"
#include "asl/metrics.hpp"
#include "asl/model.hpp"
#include "asl/optim.hpp"

namespace asl {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double train_acc = 0;
  std::optional<double> val_loss;
  std::optional<double> val_acc;
  double seconds = 0;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  OptimizerKind optimizer = OptimizerKind::kRmsProp;
  /// Unset means 0.001 for RMSProp and 0.01 for Adam.
  std::optional<double> learning_rate;
  std::uint64_t seed = 0;
  std::size_t num_classes = 29;
  double dropout_rate = 0.2;
  /// Skip the final short batch of each epoch instead of training on it.
  bool drop_last = false;
  /// When false every EpochRecord::seconds is 0, so history files compare bitwise.
  bool record_wall_time = true;
  /// Write checkpoint_epochNNNN.aslw every N epochs; 0 disables.
  std::size_t checkpoint_every = 0;
  /// model.aslw and history.csv land here at the end; empty writes nothing.
  std::filesystem::path out_dir;
  /// Called after every epoch; returning false ends training early.
  std::function<bool(const EpochRecord&)> on_epoch;

  double lr() const;
  /// Throws ConfigError.
  void validate() const;
};

struct TrainResult {
  Model<float> model;
  std::vector<EpochRecord> history;
};

/// Trains a freshly initialized model on ds[train_idx], scoring ds[val_idx]
/// in eval mode after every epoch (skipped when val_idx is empty).
TrainResult train(const TrainConfig& cfg, const Dataset& ds, std::span<const std::size_t> train_idx,
                  std::span<const std::size_t> val_idx);

struct EvalResult {
  double loss = 0;
  ConfusionMatrix confusion;
  MetricSet metrics;
};

/// Eval-mode pass over ds[indices] in the given order. Ties in the argmax go
/// to the lowest class index. Throws InputError when indices is empty.
EvalResult evaluate(Model<float>& model, const Dataset& ds, std::span<const std::size_t> indices,
                    std::size_t batch_size = 128);
EvalResult evaluate(Model<float>& model, const Dataset& ds, std::size_t batch_size = 128);

/// Index of the largest entry of each row; ties go to the lowest index.
std::vector<std::size_t> argmax_rows(const Tensor& probs);

struct Prediction {
  std::size_t label;
  std::string name;
  double probability;
};

/// The top_k classes of one [H, W, C] image, by descending probability with
/// ties broken by class index. class_names may be empty (indices are used).
std::vector<Prediction> predict_top_k(Model<float>& model, const Tensor& image, std::size_t top_k,
                                      const std::vector<std::string>& class_names = {});

/// Header "epoch,train_loss,train_acc,val_loss,val_acc,seconds"; missing
/// validation values are left blank.
void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace asl
