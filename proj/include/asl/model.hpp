#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "asl/layers.hpp"
#include "asl/rng.hpp"
#include "asl/tensor.hpp"

namespace asl {

struct ModelConfig {
  std::size_t input_h = 50;
  std::size_t input_w = 50;
  std::size_t input_c = 3;
  std::array<std::size_t, 4> conv_filters{32, 64, 128, 256};
  std::size_t kernel = 3;
  std::size_t dense_units = 64;
  std::size_t num_classes = 29;
  double dropout_rate = 0.2;
  std::uint64_t seed = 0;

  /// Throws ConfigError if the fixed layer stack cannot be applied.
  void validate() const;
  Shape input_shape() const { return {input_h, input_w, input_c}; }
};

struct SummaryRow {
  std::string layer;
  Shape output_shape;  // per sample; the batch axis is implied
  std::size_t params;
};

struct ModelSummary {
  std::vector<SummaryRow> rows;
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;

  /// Keras-style table: "(None, 48, 48, 32)", the input row bracketed.
  std::string to_string() const;
};

/// "(None, d0, d1, ...)".
std::string format_batch_shape(const Shape& sample_shape);

/// The 13-layer classifier:
///   Input -> Conv2D(32) -> BN -> Conv2D(64) -> Conv2D(128) -> MaxPool -> Dropout
///   -> BN -> Conv2D(256) -> MaxPool -> Flatten -> Dense(64) -> Dense(num_classes)
/// Conv and the hidden dense layer use ReLU; the output is a softmax over
/// the final dense logits.
template <typename T>
class Model {
 public:
  /// Initializes from Rng(cfg.seed).fork("init").
  explicit Model(const ModelConfig& cfg);
  Model(const ModelConfig& cfg, Rng& init_rng);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }

  /// Class probabilities [N, num_classes]. Train mode caches activations for
  /// backward() and draws dropout masks from rng.
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng);
  /// Eval-mode forward.
  BasicTensor<T> predict(const BasicTensor<T>& x);
  const BasicTensor<T>& logits() const { return logits_; }

  /// Back-propagates a gradient w.r.t. the logits (e.g. the fused softmax
  /// cross-entropy gradient). Returns the 16 trainable tensors with their
  /// freshly computed gradients. Throws StateError without a prior
  /// train-mode forward.
  std::vector<ParamRef<T>> backward(const BasicTensor<T>& grad_logits);

  std::vector<ParamRef<T>> parameters();
  /// Every persistent tensor in file order, batch-norm moving stats included.
  std::vector<StateRef<T>> state();

  ModelSummary summary() const;
  std::size_t layer_count() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

  void freeze_dropout_masks(bool frozen);
  /// See Layer::freeze_switches(); needs a prior train-mode forward.
  void freeze_switches(bool frozen);

 private:
  void build(Rng& rng);

  ModelConfig cfg_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  BasicTensor<T> logits_;
  bool trained_forward_ = false;
};

extern template class Model<float>;
extern template class Model<double>;

/// Weights file: "ASLW", u32 version (1), u32 num_classes, u32 tensor count,
/// then per tensor u16 name length, name, u8 ndim, ndim x u32 dims, u8 dtype
/// (0 = f32), raw payload. Little-endian throughout.
void save_weights(Model<float>& model, const std::filesystem::path& path);

/// Throws FormatError naming the offending tensor on any mismatch with cfg.
Model<float> load_weights(const std::filesystem::path& path, const ModelConfig& cfg);

/// Reads only the header and returns its num_classes field.
std::uint32_t peek_weights_num_classes(const std::filesystem::path& path);

inline constexpr std::uint32_t kWeightsVersion = 1;

}  // namespace asl
