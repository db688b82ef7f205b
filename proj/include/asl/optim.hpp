#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "asl/layers.hpp"
#include "asl/tensor.hpp"

namespace asl {

struct AdamHyper {
  double alpha = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  void validate() const;
};

struct RmsPropHyper {
  double alpha = 0.001;
  double rho = 0.9;
  double epsilon = 1e-7;
  void validate() const;
};

/// Moment accumulators, one entry per parameter tensor. first_moment stays
/// empty for RMSProp. Lazily shaped on the first step.
template <typename T>
struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<BasicTensor<T>> first_moment;
  std::vector<BasicTensor<T>> second_moment;
};

/// One bias-corrected Adam update over matching params/grads lists.
/// Throws StateError on any shape disagreement.
template <typename T>
void adam_step(std::span<BasicTensor<T>* const> params, std::span<const BasicTensor<T>* const> grads,
               OptimizerState<T>& state, const AdamHyper& h);

template <typename T>
void rmsprop_step(std::span<BasicTensor<T>* const> params,
                  std::span<const BasicTensor<T>* const> grads, OptimizerState<T>& state,
                  const RmsPropHyper& h);

enum class OptimizerKind { kRmsProp, kAdam };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view optimizer_name(OptimizerKind kind);

/// Binds an update rule and its state to a fixed parameter list.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate);

  void step(std::span<const ParamRef<T>> params);
  const OptimizerState<T>& state() const { return state_; }

 private:
  OptimizerKind kind_;
  AdamHyper adam_;
  RmsPropHyper rmsprop_;
  OptimizerState<T> state_;
};

template <typename T>
struct LossAndGrad {
  double loss;
  BasicTensor<T> grad_logits;
};

/// Mean categorical cross-entropy of softmax(logits) against one-hot targets,
/// via log-sum-exp, and its gradient (softmax - onehot) / N.
/// Throws LabelError when a target row is not exactly one-hot.
template <typename T>
LossAndGrad<T> crossentropy_from_logits(const BasicTensor<T>& logits,
                                        const BasicTensor<T>& onehot);

template <typename T>
BasicTensor<T> one_hot(std::span<const std::size_t> labels, std::size_t num_classes);

}  // namespace asl
