#pragma once

// OpenMP data-parallel compute kernels. Every kernel partitions work over
// *output* elements only, so each output value is produced by one thread with
// a fixed summation order: results are bitwise identical for any thread count.
//
// Serial nested-loop counterparts live in asl/reference.hpp and are used by the
// tests and the benchmark.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "asl/tensor.hpp"

namespace asl::kernels {

enum class Trans : bool { kNo = false, kYes = true };

/// C[m,n] = op(A)[m,k] * op(B)[k,n]  (+ C when accumulate).
/// op(A) is A (row-major, leading dim lda) or its transpose; likewise for B.
template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, bool accumulate, T* c, std::size_t ldc);

/// Unfolds one HWC image into rows of 3x3xC patches: col[(i*wo+j), (di*3+dj)*C + ci].
template <typename T>
void im2col3x3(const T* image, std::size_t h, std::size_t w, std::size_t c, T* col);

/// Adjoint of im2col3x3: dx[h,w,c] = sum of every patch entry that reads it.
/// Overwrites dx. Implemented as a gather so each dx entry has one writer.
template <typename T>
void col2im3x3(const T* col, std::size_t h, std::size_t w, std::size_t c, T* image);

/// Valid 3x3 stride-1 convolution, NHWC input, [3,3,Cin,Cout] weights.
template <typename T>
void conv3x3_forward(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                     const BasicTensor<T>& bias, BasicTensor<T>& y);

/// dx may be null when the input gradient is not needed (first layer).
template <typename T>
void conv3x3_backward(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                      const BasicTensor<T>& dy, BasicTensor<T>* dx, BasicTensor<T>& dweights,
                      BasicTensor<T>& dbias);

/// 2x2 window, stride 2. argmax receives the flat input offset of each window
/// maximum; ties go to the first element in row-major window order.
template <typename T>
void maxpool2x2_forward(const BasicTensor<T>& x, BasicTensor<T>& y,
                        std::vector<std::uint32_t>& argmax);

template <typename T>
void maxpool2x2_backward(const BasicTensor<T>& dy, const std::vector<std::uint32_t>& argmax,
                         BasicTensor<T>& dx);

}  // namespace asl::kernels
