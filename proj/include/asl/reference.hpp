#pragma once

// Serial nested-loop implementations. These are the oracles the parallel
// kernels are tested and benchmarked against; nothing on the training path
// calls them. Sums accumulate in double.

#include <cstdint>
#include <vector>

#include "asl/tensor.hpp"

namespace asl::reference {

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Direct sliding-window valid convolution with a k x k kernel, stride 1.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                      const BasicTensor<T>& bias);

template <typename T>
struct ConvGrads {
  BasicTensor<T> dx, dweights, dbias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                             const BasicTensor<T>& dy);

template <typename T>
BasicTensor<T> maxpool2x2(const BasicTensor<T>& x);

/// Routes dy to the first maximum of each window.
template <typename T>
BasicTensor<T> maxpool2x2_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy);

}  // namespace asl::reference
