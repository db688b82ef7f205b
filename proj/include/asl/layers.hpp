#pragma once

// Forward/backward math for the layer kinds of the classifier, as free
// functions over explicit parameters, plus stateful Layer wrappers that cache
// what backward needs. Everything is instantiated for float (training) and
// double (gradient checking).

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "asl/rng.hpp"
#include "asl/tensor.hpp"

namespace asl {

enum class Mode { kTrain, kEval };

/// sqrt(6 / (fan_in + fan_out)).
double glorot_limit(std::size_t fan_in, std::size_t fan_out);

/// Entries uniform on [-L, L] with L = glorot_limit(fan_in, fan_out).
template <typename T>
BasicTensor<T> glorot_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out,
                              const Shape& shape);

// ---------------------------------------------------------------------------
// Convolution: 3x3 kernel, stride 1, valid padding.

template <typename T>
struct ConvParams {
  BasicTensor<T> weights;  // [3, 3, Cin, Cout]
  BasicTensor<T> bias;     // [Cout]

  /// Glorot-uniform kernel (fan_in = 9*Cin, fan_out = 9*Cout), zero bias.
  static ConvParams init(Rng& rng, std::size_t cin, std::size_t cout);
  std::size_t in_channels() const { return weights.dim(2); }
  std::size_t out_channels() const { return weights.dim(3); }
  std::size_t param_count() const { return weights.size() + bias.size(); }
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> dx, dweights, dbias;
};

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const ConvParams<T>& p);

/// dx is left empty when need_dx is false.
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const ConvParams<T>& p,
                             const BasicTensor<T>& dy, bool need_dx = true);

// ---------------------------------------------------------------------------
// Batch normalization over every axis but the last.

template <typename T>
struct BatchNormParams {
  BasicTensor<T> gamma;        // trainable
  BasicTensor<T> beta;         // trainable
  BasicTensor<T> moving_mean;  // non-trainable
  BasicTensor<T> moving_var;   // non-trainable
  double epsilon = 1e-3;
  double momentum = 0.99;
  /// Train-mode batches folded into the moving statistics. The update weight
  /// is (1 - momentum) / (1 - momentum^updates), so the first batch replaces
  /// the initial values and later weights settle to 1 - momentum. Not stored
  /// in weight files; loaded statistics count as settled.
  std::uint64_t updates = 0;

  /// gamma = 1, beta = 0, moving_mean = 0, moving_var = 1.
  static BatchNormParams init(std::size_t channels);
  std::size_t channels() const { return gamma.size(); }
  std::size_t trainable_count() const { return 2 * channels(); }
  std::size_t non_trainable_count() const { return 2 * channels(); }
};

/// An update count past which momentum^updates is 0 in double precision.
inline constexpr std::uint64_t kSettledUpdates = std::uint64_t{1} << 20;

template <typename T>
struct BatchNormCache {
  BasicTensor<T> x_hat;
  std::vector<double> inv_std;
};

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> dx, dgamma, dbeta;
};

/// Train mode normalizes with biased batch statistics, updates the
/// bias-corrected moving averages, and fills cache (if given) for backward. Eval mode uses the
/// moving averages. Throws InputError when a train-mode batch has a single
/// value per channel.
template <typename T>
BasicTensor<T> batchnorm(const BasicTensor<T>& x, BatchNormParams<T>& p, Mode mode,
                         BatchNormCache<T>* cache = nullptr);

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& dy, const BatchNormParams<T>& p,
                                     const BatchNormCache<T>& cache);

// ---------------------------------------------------------------------------
// Max pooling, 2x2 window, stride 2.

template <typename T>
struct MaxPoolResult {
  BasicTensor<T> y;
  std::vector<std::uint32_t> argmax;
};

template <typename T>
MaxPoolResult<T> maxpool2x2(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> maxpool2x2_backward(const BasicTensor<T>& dy,
                                   const std::vector<std::uint32_t>& argmax,
                                   const Shape& input_shape);

// ---------------------------------------------------------------------------
// Inverted dropout.

struct DropoutSpec {
  double rate = 0.2;
};

/// Mask entries are 0 or 1/(1-rate). Throws ParameterError unless 0 <= rate < 1.
template <typename T>
BasicTensor<T> dropout_mask(Rng& rng, const DropoutSpec& spec, const Shape& shape);

/// Identity in eval mode. In train mode draws a fresh mask (returned through
/// mask_out when given) and applies it.
template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, const DropoutSpec& spec, Rng& rng, Mode mode,
                       BasicTensor<T>* mask_out = nullptr);

/// Elementwise product with a mask; also the backward of dropout.
template <typename T>
BasicTensor<T> apply_mask(const BasicTensor<T>& x, const BasicTensor<T>& mask);

// ---------------------------------------------------------------------------
// Activations and reshapes.

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

/// Passes dy where x > 0 (zero subgradient at 0). x may be the relu input or output.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy);

/// [N, ...] -> [N, prod(...)].
template <typename T>
BasicTensor<T> flatten(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> unflatten(const BasicTensor<T>& x, const Shape& shape);

/// Row-wise, shifted by the row max.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

// ---------------------------------------------------------------------------
// Fully connected.

template <typename T>
struct DenseParams {
  BasicTensor<T> weights;  // [fan_in, units]
  BasicTensor<T> bias;     // [units]

  static DenseParams init(Rng& rng, std::size_t fan_in, std::size_t units);
  std::size_t fan_in() const { return weights.dim(0); }
  std::size_t units() const { return weights.dim(1); }
  std::size_t param_count() const { return weights.size() + bias.size(); }
};

template <typename T>
struct DenseGrads {
  BasicTensor<T> dx, dweights, dbias;
};

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const DenseParams<T>& p);

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& x, const DenseParams<T>& p,
                             const BasicTensor<T>& dy);

// ---------------------------------------------------------------------------
// Stateful layers composing the model.

template <typename T>
struct ParamRef {
  std::string name;
  BasicTensor<T>* value;
  BasicTensor<T>* grad;
};

/// A persistent tensor as written to a weights file.
template <typename T>
struct StateRef {
  std::string name;
  BasicTensor<T>* value;
  bool trainable;
};

template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }
  /// Row label used by model summaries, e.g. "Conv2D".
  virtual std::string_view kind() const = 0;
  /// Per-sample output shape for a per-sample input shape.
  virtual Shape output_shape(const Shape& input) const = 0;

  virtual BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) = 0;
  /// Gradient w.r.t. the layer input; parameter gradients are stored in the layer.
  /// Throws StateError unless the last forward ran in train mode.
  virtual BasicTensor<T> backward(const BasicTensor<T>& dy) = 0;

  virtual std::vector<ParamRef<T>> parameters() { return {}; }
  virtual std::vector<StateRef<T>> state() { return {}; }
  virtual std::size_t trainable_count() const { return 0; }
  virtual std::size_t non_trainable_count() const { return 0; }

  /// While frozen, train-mode forward keeps the ReLU gates and pooling
  /// choices of the last train-mode pass instead of recomputing them, which
  /// makes the layer smooth in its inputs and parameters (used by gradient
  /// checks). Layers without such decisions ignore this.
  virtual void freeze_switches(bool) {}

 protected:
  void require_cache(bool ok) const;

 private:
  std::string name_;
};

template <typename T>
class InputLayer final : public Layer<T> {
 public:
  InputLayer(std::string name, Shape sample_shape);
  std::string_view kind() const override { return "Input layer"; }
  Shape output_shape(const Shape& input) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override { return dy; }

 private:
  Shape sample_shape_;
};

/// Convolution followed by ReLU.
template <typename T>
class Conv2DLayer final : public Layer<T> {
 public:
  Conv2DLayer(std::string name, ConvParams<T> params, bool need_input_grad = true);
  std::string_view kind() const override { return "Conv2D"; }
  Shape output_shape(const Shape& input) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;
  std::vector<ParamRef<T>> parameters() override;
  std::vector<StateRef<T>> state() override;
  std::size_t trainable_count() const override { return params_.param_count(); }
  void freeze_switches(bool frozen) override;

  ConvParams<T>& params() { return params_; }

 private:
  ConvParams<T> params_;
  bool need_input_grad_;
  BasicTensor<T> input_, output_;
  bool cached_ = false;
  BasicTensor<T> dweights_, dbias_;
  BasicTensor<T> gate_;  // frozen 0/1 ReLU pattern, empty when not frozen
};

template <typename T>
class BatchNormLayer final : public Layer<T> {
 public:
  BatchNormLayer(std::string name, BatchNormParams<T> params);
  std::string_view kind() const override { return "Batch Normalization"; }
  Shape output_shape(const Shape& input) const override { return input; }
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;
  std::vector<ParamRef<T>> parameters() override;
  std::vector<StateRef<T>> state() override;
  std::size_t trainable_count() const override { return params_.trainable_count(); }
  std::size_t non_trainable_count() const override { return params_.non_trainable_count(); }

  BatchNormParams<T>& params() { return params_; }

 private:
  BatchNormParams<T> params_;
  BatchNormCache<T> cache_;
  bool cached_ = false;
  BasicTensor<T> dgamma_, dbeta_;
};

template <typename T>
class MaxPoolLayer final : public Layer<T> {
 public:
  explicit MaxPoolLayer(std::string name) : Layer<T>(std::move(name)) {}
  std::string_view kind() const override { return "MaxPooling2D"; }
  Shape output_shape(const Shape& input) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;
  void freeze_switches(bool frozen) override { frozen_ = frozen && cached_; }

 private:
  Shape input_shape_;
  std::vector<std::uint32_t> argmax_;
  bool cached_ = false;
  bool frozen_ = false;
};

template <typename T>
class DropoutLayer final : public Layer<T> {
 public:
  DropoutLayer(std::string name, DropoutSpec spec);
  std::string_view kind() const override { return "Dropout"; }
  Shape output_shape(const Shape& input) const override { return input; }
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;

  /// While frozen, train-mode forward reuses the previous mask when shapes match.
  void freeze_mask(bool frozen) { frozen_ = frozen; }
  const BasicTensor<T>& mask() const { return mask_; }

 private:
  DropoutSpec spec_;
  BasicTensor<T> mask_;
  bool frozen_ = false;
  bool cached_ = false;
};

template <typename T>
class FlattenLayer final : public Layer<T> {
 public:
  explicit FlattenLayer(std::string name) : Layer<T>(std::move(name)) {}
  std::string_view kind() const override { return "Flatten"; }
  Shape output_shape(const Shape& input) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;

 private:
  Shape input_shape_;
  bool cached_ = false;
};

enum class Activation { kNone, kRelu };

template <typename T>
class DenseLayer final : public Layer<T> {
 public:
  DenseLayer(std::string name, DenseParams<T> params, Activation activation);
  std::string_view kind() const override { return "Dense"; }
  Shape output_shape(const Shape& input) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;
  std::vector<ParamRef<T>> parameters() override;
  std::vector<StateRef<T>> state() override;
  std::size_t trainable_count() const override { return params_.param_count(); }
  void freeze_switches(bool frozen) override;

  DenseParams<T>& params() { return params_; }

 private:
  DenseParams<T> params_;
  Activation activation_;
  BasicTensor<T> input_, output_;
  bool cached_ = false;
  BasicTensor<T> dweights_, dbias_;
  BasicTensor<T> gate_;  // frozen 0/1 ReLU pattern, empty when not frozen
};

}  // namespace asl
