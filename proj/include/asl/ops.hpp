#pragma once

#include "asl/rng.hpp"
#include "asl/tensor.hpp"

namespace asl {

/// Entries uniform on [lo, hi). Throws ParameterError unless lo < hi.
template <typename T>
BasicTensor<T> uniform(Rng& rng, T lo, T hi, const Shape& shape);

/// Independent normal draws via the Box-Muller transform. std must be >= 0.
template <typename T>
BasicTensor<T> gaussian(Rng& rng, T mean, T stddev, const Shape& shape);

/// [m,k] x [k,n] -> [m,n] through the blocked parallel GEMM.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);
/// Saturates every entry into [lo, hi]; lo must not exceed hi.
template <typename T>
BasicTensor<T> clip(const BasicTensor<T>& a, T lo, T hi);

template <typename T>
bool all_finite(const BasicTensor<T>& a);

}  // namespace asl
