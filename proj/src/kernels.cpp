#include "asl/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <type_traits>
#include <vector>

namespace asl::kernels {
namespace {

template <typename T>
struct Simd;

template <>
struct Simd<float> {
  typedef float V __attribute__((vector_size(64)));
  static constexpr std::size_t kWidth = 16;
};

template <>
struct Simd<double> {
  typedef double V __attribute__((vector_size(64)));
  static constexpr std::size_t kWidth = 8;
};

constexpr std::size_t kMr = 8;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 128;

template <typename T>
constexpr std::size_t kNr = 2 * Simd<T>::kWidth;

template <typename T>
using AlignedBuffer = std::vector<typename Simd<T>::V>;

template <typename T>
T* reserve(AlignedBuffer<T>& buf, std::size_t count) {
  const std::size_t vecs = (count + Simd<T>::kWidth - 1) / Simd<T>::kWidth;
  if (buf.size() < vecs) buf.resize(vecs);
  return reinterpret_cast<T*>(buf.data());
}

// Packs op(A)[i0:i0+mc, p0:p0+kc] into kMr-row panels, k-major within a panel.
template <typename T>
void pack_a(Trans trans, const T* a, std::size_t lda, std::size_t i0, std::size_t mc,
            std::size_t p0, std::size_t kc, T* out) {
  for (std::size_t ir = 0; ir < mc; ir += kMr) {
    const std::size_t rows = std::min(kMr, mc - ir);
    T* panel = out + ir * kc;
    if (trans == Trans::kNo) {
      for (std::size_t i = 0; i < kMr; ++i) {
        if (i < rows) {
          const T* src = a + (i0 + ir + i) * lda + p0;
          for (std::size_t p = 0; p < kc; ++p) panel[p * kMr + i] = src[p];
        } else {
          for (std::size_t p = 0; p < kc; ++p) panel[p * kMr + i] = T(0);
        }
      }
    } else {
      for (std::size_t p = 0; p < kc; ++p) {
        const T* src = a + (p0 + p) * lda + i0 + ir;
        for (std::size_t i = 0; i < kMr; ++i) panel[p * kMr + i] = i < rows ? src[i] : T(0);
      }
    }
  }
}

// Packs op(B)[p0:p0+kc, 0:n] into kNr-column panels, k-major within a panel.
template <typename T>
void pack_b(Trans trans, const T* b, std::size_t ldb, std::size_t p0, std::size_t kc,
            std::size_t n, T* out) {
  constexpr std::size_t nr = kNr<T>;
  const auto panels = static_cast<std::ptrdiff_t>((n + nr - 1) / nr);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t jp = 0; jp < panels; ++jp) {
    const std::size_t jr = static_cast<std::size_t>(jp) * nr;
    const std::size_t cols = std::min(nr, n - jr);
    T* panel = out + jr * kc;
    if (trans == Trans::kNo) {
      for (std::size_t p = 0; p < kc; ++p) {
        const T* src = b + (p0 + p) * ldb + jr;
        for (std::size_t j = 0; j < nr; ++j) panel[p * nr + j] = j < cols ? src[j] : T(0);
      }
    } else {
      for (std::size_t j = 0; j < nr; ++j) {
        if (j < cols) {
          const T* src = b + (jr + j) * ldb + p0;
          for (std::size_t p = 0; p < kc; ++p) panel[p * nr + j] = src[p];
        } else {
          for (std::size_t p = 0; p < kc; ++p) panel[p * nr + j] = T(0);
        }
      }
    }
  }
}

template <typename T>
inline void micro_kernel(std::size_t kc, const T* __restrict ap, const T* __restrict bp, T* c,
                         std::size_t ldc, std::size_t rows, std::size_t cols, bool accumulate) {
  using V = typename Simd<T>::V;
  constexpr std::size_t w = Simd<T>::kWidth;
  constexpr std::size_t nr = kNr<T>;

  V acc0[kMr];
  V acc1[kMr];
  for (std::size_t i = 0; i < kMr; ++i) {
    acc0[i] = V{};
    acc1[i] = V{};
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const V b0 = *reinterpret_cast<const V*>(bp);
    const V b1 = *reinterpret_cast<const V*>(bp + w);
#pragma GCC unroll 8
    for (std::size_t i = 0; i < kMr; ++i) {
      const T ai = ap[i];
      acc0[i] += ai * b0;
      acc1[i] += ai * b1;
    }
    ap += kMr;
    bp += nr;
  }

  if (rows == kMr && cols == nr) {
    for (std::size_t i = 0; i < kMr; ++i) {
      T* row = c + i * ldc;
      if (accumulate) {
        V c0, c1;
        std::memcpy(&c0, row, sizeof(V));
        std::memcpy(&c1, row + w, sizeof(V));
        acc0[i] += c0;
        acc1[i] += c1;
      }
      std::memcpy(row, &acc0[i], sizeof(V));
      std::memcpy(row + w, &acc1[i], sizeof(V));
    }
    return;
  }
  alignas(64) T tile[kMr * nr];
  for (std::size_t i = 0; i < kMr; ++i) {
    std::memcpy(tile + i * nr, &acc0[i], sizeof(V));
    std::memcpy(tile + i * nr + w, &acc1[i], sizeof(V));
  }
  for (std::size_t i = 0; i < rows; ++i) {
    T* row = c + i * ldc;
    for (std::size_t j = 0; j < cols; ++j) row[j] = accumulate ? row[j] + tile[i * nr + j] : tile[i * nr + j];
  }
}

}  // namespace

template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, bool accumulate, T* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T(0));
    return;
  }
  constexpr std::size_t nr = kNr<T>;
  static thread_local AlignedBuffer<T> b_store;
  const std::size_t n_padded = (n + nr - 1) / nr * nr;
  T* bpack = reserve<T>(b_store, n_padded * std::min(k, kKc));
  const auto blocks = static_cast<std::ptrdiff_t>((m + kMc - 1) / kMc);

  for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
    const std::size_t kc = std::min(kKc, k - p0);
    const bool acc = accumulate || p0 > 0;
    pack_b(trans_b, b, ldb, p0, kc, n, bpack);

#pragma omp parallel
    {
      static thread_local AlignedBuffer<T> a_store;
      T* apack = reserve<T>(a_store, kMc * kKc);
#pragma omp for schedule(static)
      for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
        const std::size_t i0 = static_cast<std::size_t>(blk) * kMc;
        const std::size_t mc = std::min(kMc, m - i0);
        pack_a(trans_a, a, lda, i0, mc, p0, kc, apack);
        for (std::size_t jr = 0; jr < n; jr += nr) {
          const std::size_t cols = std::min(nr, n - jr);
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            micro_kernel<T>(kc, apack + ir * kc, bpack + jr * kc, c + (i0 + ir) * ldc + jr, ldc,
                            std::min(kMr, mc - ir), cols, acc);
          }
        }
      }
    }
  }
}

template <typename T>
void im2col3x3(const T* image, std::size_t h, std::size_t w, std::size_t c, T* col) {
  const std::size_t ho = h - 2, wo = w - 2;
  const std::size_t row_len = 9 * c;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(ho); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < wo; ++j) {
      T* dst = col + (i * wo + j) * row_len;
      for (std::size_t di = 0; di < 3; ++di) {
        // The three horizontally adjacent pixels are contiguous in HWC.
        const T* src = image + ((i + di) * w + j) * c;
        std::memcpy(dst + di * 3 * c, src, 3 * c * sizeof(T));
      }
    }
  }
}

namespace {

// im2col3x3 that widens float pixels to double on the way.
void im2col3x3_widen(const float* image, std::size_t h, std::size_t w, std::size_t c,
                     double* col) {
  const std::size_t ho = h - 2, wo = w - 2;
  const std::size_t row_len = 9 * c;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(ho); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < wo; ++j) {
      double* dst = col + (i * wo + j) * row_len;
      for (std::size_t di = 0; di < 3; ++di) {
        const float* src = image + ((i + di) * w + j) * c;
        std::copy_n(src, 3 * c, dst + di * 3 * c);
      }
    }
  }
}

}  // namespace

template <typename T>
void col2im3x3(const T* col, std::size_t h, std::size_t w, std::size_t c, T* image) {
  const std::size_t ho = h - 2, wo = w - 2;
  const std::size_t row_len = 9 * c;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t yy = 0; yy < static_cast<std::ptrdiff_t>(h); ++yy) {
    const auto y = static_cast<std::size_t>(yy);
    for (std::size_t x = 0; x < w; ++x) {
      T* dst = image + (y * w + x) * c;
      std::fill(dst, dst + c, T(0));
      for (std::size_t di = 0; di < 3; ++di) {
        if (y < di || y - di >= ho) continue;
        const std::size_t i = y - di;
        for (std::size_t dj = 0; dj < 3; ++dj) {
          if (x < dj || x - dj >= wo) continue;
          const std::size_t j = x - dj;
          const T* src = col + (i * wo + j) * row_len + (di * 3 + dj) * c;
          for (std::size_t ci = 0; ci < c; ++ci) dst[ci] += src[ci];
        }
      }
    }
  }
}

template <typename T>
void conv3x3_forward(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                     const BasicTensor<T>& bias, BasicTensor<T>& y) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const std::size_t cout = weights.dim(3);
  const std::size_t ho = h - 2, wo = w - 2, pixels = ho * wo;
  if (y.shape() != Shape{n, ho, wo, cout}) y = BasicTensor<T>({n, ho, wo, cout});

  // Every output is accumulated in double, bias included, and rounded once.
  static thread_local AlignedBuffer<double> col_store, out_store;
  double* col = reserve<double>(col_store, pixels * 9 * cin);
  double* acc = reserve<double>(out_store, pixels * cout);
  std::vector<double> wide_weights(weights.values().begin(), weights.values().end());
  for (std::size_t s = 0; s < n; ++s) {
    const T* image = x.data() + s * h * w * cin;
    if constexpr (std::is_same_v<T, double>)
      im2col3x3(image, h, w, cin, col);
    else
      im2col3x3_widen(image, h, w, cin, col);
    gemm(Trans::kNo, Trans::kNo, pixels, cout, 9 * cin, col, 9 * cin, wide_weights.data(), cout,
         false, acc, cout);
    T* out = y.data() + s * pixels * cout;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(pixels); ++p) {
      const std::size_t row = static_cast<std::size_t>(p) * cout;
      for (std::size_t co = 0; co < cout; ++co)
        out[row + co] = static_cast<T>(acc[row + co] + static_cast<double>(bias[co]));
    }
  }
}

template <typename T>
void conv3x3_backward(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                      const BasicTensor<T>& dy, BasicTensor<T>* dx, BasicTensor<T>& dweights,
                      BasicTensor<T>& dbias) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const std::size_t cout = weights.dim(3);
  const std::size_t pixels = (h - 2) * (w - 2);
  const std::size_t patch = 9 * cin;

  if (dweights.shape() != weights.shape()) dweights = BasicTensor<T>(weights.shape());
  if (dbias.shape() != Shape{cout}) dbias = BasicTensor<T>({cout});
  if (dx && dx->shape() != x.shape()) *dx = BasicTensor<T>(x.shape());

  dbias.fill(T(0));
  for (std::size_t r = 0; r < n * pixels; ++r) {
    const T* row = dy.data() + r * cout;
    for (std::size_t co = 0; co < cout; ++co) dbias[co] += row[co];
  }

  static thread_local AlignedBuffer<T> col_store;
  T* col = reserve<T>(col_store, pixels * patch);
  for (std::size_t s = 0; s < n; ++s) {
    const T* grad = dy.data() + s * pixels * cout;
    im2col3x3(x.data() + s * h * w * cin, h, w, cin, col);
    gemm(Trans::kYes, Trans::kNo, patch, cout, pixels, col, patch, grad, cout, s > 0,
         dweights.data(), cout);
    if (dx) {
      gemm(Trans::kNo, Trans::kYes, pixels, patch, cout, grad, cout, weights.data(), cout, false,
           col, patch);
      col2im3x3(col, h, w, cin, dx->data() + s * h * w * cin);
    }
  }
}

template <typename T>
void maxpool2x2_forward(const BasicTensor<T>& x, BasicTensor<T>& y,
                        std::vector<std::uint32_t>& argmax) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t ho = h / 2, wo = w / 2;
  if (y.shape() != Shape{n, ho, wo, c}) y = BasicTensor<T>({n, ho, wo, c});
  argmax.resize(y.size());
  const auto rows = static_cast<std::ptrdiff_t>(n * ho);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const std::size_t s = static_cast<std::size_t>(r) / ho, i = static_cast<std::size_t>(r) % ho;
    for (std::size_t j = 0; j < wo; ++j) {
      const std::size_t base = ((s * h + 2 * i) * w + 2 * j) * c;
      const std::size_t offsets[4] = {base, base + c, base + w * c, base + w * c + c};
      const std::size_t out = ((s * ho + i) * wo + j) * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = offsets[0] + ch;
        for (std::size_t q = 1; q < 4; ++q) {
          const std::size_t cand = offsets[q] + ch;
          if (x[cand] > x[best]) best = cand;
        }
        y[out + ch] = x[best];
        argmax[out + ch] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

template <typename T>
void maxpool2x2_backward(const BasicTensor<T>& dy, const std::vector<std::uint32_t>& argmax,
                         BasicTensor<T>& dx) {
  dx.fill(T(0));
  // Windows do not overlap, so every dx entry has at most one writer.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(dy.size()); ++i)
    dx[argmax[static_cast<std::size_t>(i)]] = dy[static_cast<std::size_t>(i)];
}

#define ASL_INSTANTIATE_KERNELS(T)                                                              \
  template void gemm<T>(Trans, Trans, std::size_t, std::size_t, std::size_t, const T*,         \
                        std::size_t, const T*, std::size_t, bool, T*, std::size_t);            \
  template void im2col3x3<T>(const T*, std::size_t, std::size_t, std::size_t, T*);             \
  template void col2im3x3<T>(const T*, std::size_t, std::size_t, std::size_t, T*);             \
  template void conv3x3_forward<T>(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                   const BasicTensor<T>&, BasicTensor<T>&);                    \
  template void conv3x3_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                    const BasicTensor<T>&, BasicTensor<T>*, BasicTensor<T>&,   \
                                    BasicTensor<T>&);                                          \
  template void maxpool2x2_forward<T>(const BasicTensor<T>&, BasicTensor<T>&,                  \
                                      std::vector<std::uint32_t>&);                            \
  template void maxpool2x2_backward<T>(const BasicTensor<T>&, const std::vector<std::uint32_t>&, \
                                       BasicTensor<T>&);

ASL_INSTANTIATE_KERNELS(float)
ASL_INSTANTIATE_KERNELS(double)

#undef ASL_INSTANTIATE_KERNELS

}  // namespace asl::kernels
