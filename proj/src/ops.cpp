#include "asl/ops.hpp"

#include <cmath>
#include <numbers>

#include "asl/kernels.hpp"

namespace asl {
namespace {

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

template <typename T, typename F>
BasicTensor<T> zip(const BasicTensor<T>& a, const BasicTensor<T>& b, F f) {
  BasicTensor<T> out(a.shape());
  const auto n = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
  return out;
}

template <typename T, typename F>
BasicTensor<T> map(const BasicTensor<T>& a, F f) {
  BasicTensor<T> out(a.shape());
  const auto n = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

template <typename T>
BasicTensor<T> uniform(Rng& rng, T lo, T hi, const Shape& shape) {
  if (!(lo < hi))
    throw ParameterError("uniform: requires lo < hi, got [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + ")");
  try {
    validate_shape(shape);
  } catch (const ShapeError& e) {
    throw ParameterError(std::string("uniform: ") + e.what());
  }
  BasicTensor<T> out(shape);
  const double span = static_cast<double>(hi) - static_cast<double>(lo);
  for (auto& v : out.values()) {
    auto x = static_cast<T>(static_cast<double>(lo) + span * rng.next_double());
    // Rounding to T can land exactly on hi.
    if (x >= hi) x = std::nextafter(hi, lo);
    v = x;
  }
  return out;
}

template <typename T>
BasicTensor<T> gaussian(Rng& rng, T mean, T stddev, const Shape& shape) {
  if (!(stddev >= T(0)))
    throw ParameterError("gaussian: standard deviation must be >= 0, got " +
                         std::to_string(stddev));
  BasicTensor<T> out(shape);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; i += 2) {
    const double u1 = 1.0 - rng.next_double();  // (0, 1]
    const double u2 = rng.next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    out[i] = static_cast<T>(mean + stddev * r * std::cos(theta));
    if (i + 1 < n) out[i + 1] = static_cast<T>(mean + stddev * r * std::sin(theta));
  }
  return out;
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: operands must be rank 2, got " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dims disagree " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  BasicTensor<T> c({m, n});
  kernels::gemm(kernels::Trans::kNo, kernels::Trans::kNo, m, n, k, a.data(), k, b.data(), n,
                false, c.data(), n);
  return c;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  return zip(a, b, [](T x, T y) { return x + y; });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "sub");
  return zip(a, b, [](T x, T y) { return x - y; });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mul");
  return zip(a, b, [](T x, T y) { return x * y; });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  return map(a, [factor](T x) { return x * factor; });
}

template <typename T>
BasicTensor<T> clip(const BasicTensor<T>& a, T lo, T hi) {
  if (lo > hi)
    throw ParameterError("clip: lo must not exceed hi, got [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]");
  return map(a, [lo, hi](T x) { return x < lo ? lo : (x > hi ? hi : x); });
}

template <typename T>
bool all_finite(const BasicTensor<T>& a) {
  for (T v : a.values())
    if (!std::isfinite(v)) return false;
  return true;
}

#define ASL_INSTANTIATE_OPS(T)                                                      \
  template BasicTensor<T> uniform<T>(Rng&, T, T, const Shape&);                     \
  template BasicTensor<T> gaussian<T>(Rng&, T, T, const Shape&);                    \
  template BasicTensor<T> matmul<T>(const BasicTensor<T>&, const BasicTensor<T>&);  \
  template BasicTensor<T> add<T>(const BasicTensor<T>&, const BasicTensor<T>&);     \
  template BasicTensor<T> sub<T>(const BasicTensor<T>&, const BasicTensor<T>&);     \
  template BasicTensor<T> mul<T>(const BasicTensor<T>&, const BasicTensor<T>&);     \
  template BasicTensor<T> scale<T>(const BasicTensor<T>&, T);                       \
  template BasicTensor<T> clip<T>(const BasicTensor<T>&, T, T);                     \
  template bool all_finite<T>(const BasicTensor<T>&);

ASL_INSTANTIATE_OPS(float)
ASL_INSTANTIATE_OPS(double)

#undef ASL_INSTANTIATE_OPS

}  // namespace asl
