#include "asl/optim.hpp"

#include <cmath>
#include <string>

namespace asl {
namespace {

template <typename T>
void prepare_state(std::span<BasicTensor<T>* const> params,
                   std::span<const BasicTensor<T>* const> grads, OptimizerState<T>& state,
                   bool with_first_moment) {
  if (params.size() != grads.size())
    throw StateError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != grads[i]->shape())
      throw StateError("optimizer: parameter " + std::to_string(i) + " has shape " +
                       shape_string(params[i]->shape()) + " but gradient has " +
                       shape_string(grads[i]->shape()));

  auto init = [&](std::vector<BasicTensor<T>>& moments) {
    if (moments.empty()) {
      if (state.step != 0)
        throw StateError("optimizer: state has a step count but no moment tensors");
      for (auto* p : params) moments.emplace_back(p->shape());
      return;
    }
    if (moments.size() != params.size())
      throw StateError("optimizer: state tracks " + std::to_string(moments.size()) +
                       " tensors, step received " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i)
      if (moments[i].shape() != params[i]->shape())
        throw StateError("optimizer: state tensor " + std::to_string(i) + " has shape " +
                         shape_string(moments[i].shape()) + ", parameter has " +
                         shape_string(params[i]->shape()));
  };
  if (with_first_moment) init(state.first_moment);
  init(state.second_moment);
}

}  // namespace

void AdamHyper::validate() const {
  if (!(alpha > 0)) throw ParameterError("adam: learning rate must be > 0");
  if (!(beta1 >= 0 && beta1 < 1)) throw ParameterError("adam: beta1 must be in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ParameterError("adam: beta2 must be in [0, 1)");
  if (!(epsilon > 0)) throw ParameterError("adam: epsilon must be > 0");
}

void RmsPropHyper::validate() const {
  if (!(alpha > 0)) throw ParameterError("rmsprop: learning rate must be > 0");
  if (!(rho >= 0 && rho < 1)) throw ParameterError("rmsprop: rho must be in [0, 1)");
  if (!(epsilon > 0)) throw ParameterError("rmsprop: epsilon must be > 0");
}

template <typename T>
void adam_step(std::span<BasicTensor<T>* const> params, std::span<const BasicTensor<T>* const> grads,
               OptimizerState<T>& state, const AdamHyper& h) {
  h.validate();
  prepare_state(params, grads, state, true);
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(h.beta1, t);
  const double correct2 = 1.0 - std::pow(h.beta2, t);
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    T* p = params[k]->data();
    const T* g = grads[k]->data();
    T* m = state.first_moment[k].data();
    T* v = state.second_moment[k].data();
    const auto n = static_cast<std::ptrdiff_t>(params[k]->size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double m_hat = static_cast<double>(m[i]) / correct1;
      const double v_hat = static_cast<double>(v[i]) / correct2;
      p[i] = static_cast<T>(p[i] - h.alpha * m_hat / (std::sqrt(v_hat) + h.epsilon));
    }
  }
}

template <typename T>
void rmsprop_step(std::span<BasicTensor<T>* const> params,
                  std::span<const BasicTensor<T>* const> grads, OptimizerState<T>& state,
                  const RmsPropHyper& h) {
  h.validate();
  prepare_state(params, grads, state, false);
  state.step += 1;
  const T rho = static_cast<T>(h.rho);
  for (std::size_t k = 0; k < params.size(); ++k) {
    T* p = params[k]->data();
    const T* g = grads[k]->data();
    T* v = state.second_moment[k].data();
    const auto n = static_cast<std::ptrdiff_t>(params[k]->size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      v[i] = rho * v[i] + (T(1) - rho) * g[i] * g[i];
      p[i] = static_cast<T>(p[i] - h.alpha * g[i] / (std::sqrt(static_cast<double>(v[i])) + h.epsilon));
    }
  }
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "rmsprop") return OptimizerKind::kRmsProp;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected rmsprop or adam)");
}

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "rmsprop";
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind) {
  adam_.alpha = learning_rate;
  rmsprop_.alpha = learning_rate;
  if (kind_ == OptimizerKind::kAdam)
    adam_.validate();
  else
    rmsprop_.validate();
}

template <typename T>
void Optimizer<T>::step(std::span<const ParamRef<T>> params) {
  std::vector<BasicTensor<T>*> values;
  std::vector<const BasicTensor<T>*> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (const auto& p : params) {
    values.push_back(p.value);
    grads.push_back(p.grad);
  }
  if (kind_ == OptimizerKind::kAdam)
    adam_step<T>(values, grads, state_, adam_);
  else
    rmsprop_step<T>(values, grads, state_, rmsprop_);
}

template <typename T>
LossAndGrad<T> crossentropy_from_logits(const BasicTensor<T>& logits,
                                        const BasicTensor<T>& onehot) {
  if (logits.rank() != 2 || logits.shape() != onehot.shape())
    throw ShapeError("crossentropy: logits " + shape_string(logits.shape()) +
                     " and targets " + shape_string(onehot.shape()) + " must both be [N,C]");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  LossAndGrad<T> out{0.0, BasicTensor<T>(logits.shape())};
  double total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const T* z = logits.data() + r * c;
    const T* y = onehot.data() + r * c;
    std::size_t label = c;
    for (std::size_t j = 0; j < c; ++j) {
      if (y[j] == T(1) && label == c) {
        label = j;
      } else if (y[j] != T(0)) {
        throw LabelError("crossentropy: target row " + std::to_string(r) + " is not one-hot");
      }
    }
    if (label == c)
      throw LabelError("crossentropy: target row " + std::to_string(r) + " has no class set");

    double zmax = z[0];
    for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, static_cast<double>(z[j]));
    double sum = 0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(static_cast<double>(z[j]) - zmax);
    const double log_sum = zmax + std::log(sum);
    total += log_sum - static_cast<double>(z[label]);
    T* g = out.grad_logits.data() + r * c;
    for (std::size_t j = 0; j < c; ++j) {
      const double prob = std::exp(static_cast<double>(z[j]) - log_sum);
      g[j] = static_cast<T>((prob - (j == label ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  out.loss = total / static_cast<double>(n);
  return out;
}

template <typename T>
BasicTensor<T> one_hot(std::span<const std::size_t> labels, std::size_t num_classes) {
  BasicTensor<T> out({labels.size(), num_classes});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= num_classes)
      throw LabelError("one_hot: label " + std::to_string(labels[r]) + " out of range for " +
                       std::to_string(num_classes) + " classes");
    out[r * num_classes + labels[r]] = T(1);
  }
  return out;
}

#define ASL_INSTANTIATE_OPTIM(T)                                                              \
  template void adam_step<T>(std::span<BasicTensor<T>* const>,                                \
                             std::span<const BasicTensor<T>* const>, OptimizerState<T>&,      \
                             const AdamHyper&);                                               \
  template void rmsprop_step<T>(std::span<BasicTensor<T>* const>,                             \
                                std::span<const BasicTensor<T>* const>, OptimizerState<T>&,   \
                                const RmsPropHyper&);                                         \
  template class Optimizer<T>;                                                                \
  template LossAndGrad<T> crossentropy_from_logits<T>(const BasicTensor<T>&,                  \
                                                      const BasicTensor<T>&);                 \
  template BasicTensor<T> one_hot<T>(std::span<const std::size_t>, std::size_t);

ASL_INSTANTIATE_OPTIM(float)
ASL_INSTANTIATE_OPTIM(double)

#undef ASL_INSTANTIATE_OPTIM

}  // namespace asl
