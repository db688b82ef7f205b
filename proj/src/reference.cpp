#include "asl/reference.hpp"

namespace asl::reference {

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("reference::matmul: incompatible shapes " + shape_string(a.shape()) +
                     " x " + shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  BasicTensor<T> c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0;
      for (std::size_t p = 0; p < k; ++p)
        sum += static_cast<double>(a[i * k + p]) * static_cast<double>(b[p * n + j]);
      c[i * n + j] = static_cast<T>(sum);
    }
  return c;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                      const BasicTensor<T>& bias) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const std::size_t kh = weights.dim(0), kw = weights.dim(1), cout = weights.dim(3);
  const std::size_t ho = h - kh + 1, wo = w - kw + 1;
  BasicTensor<T> y({n, ho, wo, cout});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j)
        for (std::size_t co = 0; co < cout; ++co) {
          double sum = static_cast<double>(bias[co]);
          for (std::size_t di = 0; di < kh; ++di)
            for (std::size_t dj = 0; dj < kw; ++dj)
              for (std::size_t ci = 0; ci < cin; ++ci)
                sum += static_cast<double>(x.at({s, i + di, j + dj, ci})) *
                       static_cast<double>(weights.at({di, dj, ci, co}));
          y.at({s, i, j, co}) = static_cast<T>(sum);
        }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                             const BasicTensor<T>& dy) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const std::size_t kh = weights.dim(0), kw = weights.dim(1), cout = weights.dim(3);
  const std::size_t ho = h - kh + 1, wo = w - kw + 1;
  std::vector<double> dx(x.size(), 0.0), dw(weights.size(), 0.0), db(cout, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j)
        for (std::size_t co = 0; co < cout; ++co) {
          const double g = static_cast<double>(dy.at({s, i, j, co}));
          db[co] += g;
          for (std::size_t di = 0; di < kh; ++di)
            for (std::size_t dj = 0; dj < kw; ++dj)
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const std::size_t xi = ((s * h + i + di) * w + j + dj) * cin + ci;
                const std::size_t wi = ((di * kw + dj) * cin + ci) * cout + co;
                dx[xi] += g * static_cast<double>(weights[wi]);
                dw[wi] += g * static_cast<double>(x[xi]);
              }
        }
  return {BasicTensor<T>(x.shape(), std::vector<T>(dx.begin(), dx.end())),
          BasicTensor<T>(weights.shape(), std::vector<T>(dw.begin(), dw.end())),
          BasicTensor<T>({cout}, std::vector<T>(db.begin(), db.end()))};
}

template <typename T>
BasicTensor<T> maxpool2x2(const BasicTensor<T>& x) {
  const std::size_t n = x.dim(0), ho = x.dim(1) / 2, wo = x.dim(2) / 2, c = x.dim(3);
  BasicTensor<T> y({n, ho, wo, c});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) {
          T best = x.at({s, 2 * i, 2 * j, ch});
          for (std::size_t di = 0; di < 2; ++di)
            for (std::size_t dj = 0; dj < 2; ++dj) {
              const T v = x.at({s, 2 * i + di, 2 * j + dj, ch});
              if (v > best) best = v;
            }
          y.at({s, i, j, ch}) = best;
        }
  return y;
}

template <typename T>
BasicTensor<T> maxpool2x2_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  const std::size_t n = x.dim(0), ho = x.dim(1) / 2, wo = x.dim(2) / 2, c = x.dim(3);
  BasicTensor<T> dx(x.shape());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t bi = 2 * i, bj = 2 * j;
          for (std::size_t di = 0; di < 2; ++di)
            for (std::size_t dj = 0; dj < 2; ++dj)
              if (x.at({s, 2 * i + di, 2 * j + dj, ch}) > x.at({s, bi, bj, ch})) {
                bi = 2 * i + di;
                bj = 2 * j + dj;
              }
          dx.at({s, bi, bj, ch}) += dy.at({s, i, j, ch});
        }
  return dx;
}

template BasicTensor<float> matmul(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> matmul(const BasicTensor<double>&, const BasicTensor<double>&);
template BasicTensor<float> conv2d(const BasicTensor<float>&, const BasicTensor<float>&,
                                   const BasicTensor<float>&);
template BasicTensor<double> conv2d(const BasicTensor<double>&, const BasicTensor<double>&,
                                    const BasicTensor<double>&);
template ConvGrads<float> conv2d_backward(const BasicTensor<float>&, const BasicTensor<float>&,
                                          const BasicTensor<float>&);
template ConvGrads<double> conv2d_backward(const BasicTensor<double>&,
                                           const BasicTensor<double>&,
                                           const BasicTensor<double>&);
template BasicTensor<float> maxpool2x2(const BasicTensor<float>&);
template BasicTensor<double> maxpool2x2(const BasicTensor<double>&);
template BasicTensor<float> maxpool2x2_backward(const BasicTensor<float>&,
                                                const BasicTensor<float>&);
template BasicTensor<double> maxpool2x2_backward(const BasicTensor<double>&,
                                                 const BasicTensor<double>&);

}  // namespace asl::reference
