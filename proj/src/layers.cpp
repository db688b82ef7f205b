#include "asl/layers.hpp"

#include <algorithm>
#include <cmath>

#include "asl/kernels.hpp"
#include "asl/ops.hpp"

namespace asl {
namespace {

// Fixed chunking keeps per-channel reductions independent of the thread count.
constexpr std::size_t kReduceChunks = 64;

template <typename T, typename F>
std::vector<double> channel_sums(const BasicTensor<T>& x, std::size_t channels, F term) {
  const std::size_t rows = x.size() / channels;
  std::vector<double> partial(kReduceChunks * channels, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ch = 0; ch < static_cast<std::ptrdiff_t>(kReduceChunks); ++ch) {
    const std::size_t chunk = static_cast<std::size_t>(ch);
    const std::size_t begin = rows * chunk / kReduceChunks;
    const std::size_t end = rows * (chunk + 1) / kReduceChunks;
    double* acc = partial.data() + chunk * channels;
    for (std::size_t r = begin; r < end; ++r)
      for (std::size_t c = 0; c < channels; ++c) acc[c] += term(r * channels + c, c);
  }
  std::vector<double> sums(channels, 0.0);
  for (std::size_t chunk = 0; chunk < kReduceChunks; ++chunk)
    for (std::size_t c = 0; c < channels; ++c) sums[c] += partial[chunk * channels + c];
  return sums;
}

void require_conv_input(const Shape& s, std::size_t cin) {
  if (s.size() != 4)
    throw ShapeError("conv2d: input must be [N,H,W,C], got " + shape_string(s));
  if (s[1] < 3 || s[2] < 3)
    throw ShapeError("conv2d: spatial dims must be >= 3 for a 3x3 valid convolution, got " +
                     shape_string(s));
  if (s[3] != cin)
    throw ShapeError("conv2d: input has " + std::to_string(s[3]) + " channels, kernel expects " +
                     std::to_string(cin));
}

}  // namespace

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  if (fan_in == 0 || fan_out == 0)
    throw ParameterError("glorot_uniform: fan_in and fan_out must be >= 1");
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <typename T>
BasicTensor<T> glorot_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out,
                              const Shape& shape) {
  const double limit = glorot_limit(fan_in, fan_out);
  BasicTensor<T> out(shape);
  // Symmetric closed interval: u in [0,1) maps to [-L, L).
  for (auto& v : out.values()) v = static_cast<T>(limit * (2.0 * rng.next_double() - 1.0));
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
ConvParams<T> ConvParams<T>::init(Rng& rng, std::size_t cin, std::size_t cout) {
  return {glorot_uniform<T>(rng, 9 * cin, 9 * cout, {3, 3, cin, cout}), BasicTensor<T>({cout})};
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const ConvParams<T>& p) {
  if (p.weights.rank() != 4 || p.weights.dim(0) != 3 || p.weights.dim(1) != 3)
    throw ShapeError("conv2d: kernel must be [3,3,Cin,Cout], got " +
                     shape_string(p.weights.shape()));
  if (p.bias.shape() != Shape{p.out_channels()})
    throw ShapeError("conv2d: bias shape " + shape_string(p.bias.shape()) +
                     " does not match Cout=" + std::to_string(p.out_channels()));
  require_conv_input(x.shape(), p.in_channels());
  BasicTensor<T> y;
  kernels::conv3x3_forward(x, p.weights, p.bias, y);
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const ConvParams<T>& p,
                             const BasicTensor<T>& dy, bool need_dx) {
  require_conv_input(x.shape(), p.in_channels());
  const Shape expect{x.dim(0), x.dim(1) - 2, x.dim(2) - 2, p.out_channels()};
  if (dy.shape() != expect)
    throw ShapeError("conv2d_backward: upstream gradient " + shape_string(dy.shape()) +
                     " does not match output " + shape_string(expect));
  ConvGrads<T> g;
  kernels::conv3x3_backward(x, p.weights, dy, need_dx ? &g.dx : nullptr, g.dweights, g.dbias);
  return g;
}

// ---------------------------------------------------------------------------

template <typename T>
BatchNormParams<T> BatchNormParams<T>::init(std::size_t channels) {
  BatchNormParams p;
  p.gamma = BasicTensor<T>::full({channels}, T(1));
  p.beta = BasicTensor<T>({channels});
  p.moving_mean = BasicTensor<T>({channels});
  p.moving_var = BasicTensor<T>::full({channels}, T(1));
  return p;
}

template <typename T>
BasicTensor<T> batchnorm(const BasicTensor<T>& x, BatchNormParams<T>& p, Mode mode,
                         BatchNormCache<T>* cache) {
  if (x.rank() != 4 && x.rank() != 2)
    throw ShapeError("batchnorm: input must be [N,H,W,C] or [N,F], got " +
                     shape_string(x.shape()));
  const std::size_t channels = x.shape().back();
  if (channels != p.channels())
    throw ShapeError("batchnorm: input has " + std::to_string(channels) +
                     " channels, parameters have " + std::to_string(p.channels()));
  const std::size_t rows = x.size() / channels;
  BasicTensor<T> y(x.shape());

  if (mode == Mode::kEval) {
    std::vector<T> a(channels), b(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(p.moving_var[c]) + p.epsilon);
      a[c] = static_cast<T>(p.gamma[c] * inv);
      b[c] = static_cast<T>(p.beta[c] - p.gamma[c] * p.moving_mean[c] * inv);
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * channels + c;
        y[i] = a[c] * x[i] + b[c];
      }
    return y;
  }

  if (rows < 2)
    throw InputError("batchnorm: train mode needs at least 2 values per channel, got " +
                     std::to_string(rows) + " (degenerate batch)");
  std::vector<double> mean = channel_sums(x, channels, [&](std::size_t i, std::size_t) {
    return static_cast<double>(x[i]);
  });
  for (auto& m : mean) m /= static_cast<double>(rows);
  std::vector<double> var = channel_sums(x, channels, [&](std::size_t i, std::size_t c) {
    const double d = static_cast<double>(x[i]) - mean[c];
    return d * d;
  });
  for (auto& v : var) v /= static_cast<double>(rows);

  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + p.epsilon);

  BasicTensor<T> x_hat(x.shape());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * channels + c;
      const T xh = static_cast<T>((static_cast<double>(x[i]) - mean[c]) * inv_std[c]);
      x_hat[i] = xh;
      y[i] = p.gamma[c] * xh + p.beta[c];
    }

  ++p.updates;
  const double w = (1.0 - p.momentum) / (1.0 - std::pow(p.momentum, static_cast<double>(p.updates)));
  for (std::size_t c = 0; c < channels; ++c) {
    p.moving_mean[c] = static_cast<T>(p.moving_mean[c] + w * (mean[c] - p.moving_mean[c]));
    p.moving_var[c] = static_cast<T>(p.moving_var[c] + w * (var[c] - p.moving_var[c]));
  }
  if (cache) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& dy, const BatchNormParams<T>& p,
                                     const BatchNormCache<T>& cache) {
  if (dy.shape() != cache.x_hat.shape())
    throw ShapeError("batchnorm_backward: upstream gradient " + shape_string(dy.shape()) +
                     " does not match cached input " + shape_string(cache.x_hat.shape()));
  const std::size_t channels = p.channels();
  const std::size_t rows = dy.size() / channels;
  const auto& x_hat = cache.x_hat;

  std::vector<double> sum_dy =
      channel_sums(dy, channels, [&](std::size_t i, std::size_t) { return double(dy[i]); });
  std::vector<double> sum_dy_xhat = channel_sums(
      dy, channels, [&](std::size_t i, std::size_t) { return double(dy[i]) * double(x_hat[i]); });

  BatchNormGrads<T> g;
  g.dgamma = BasicTensor<T>({channels});
  g.dbeta = BasicTensor<T>({channels});
  std::vector<double> coef(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    g.dgamma[c] = static_cast<T>(sum_dy_xhat[c]);
    g.dbeta[c] = static_cast<T>(sum_dy[c]);
    coef[c] = static_cast<double>(p.gamma[c]) * cache.inv_std[c] / static_cast<double>(rows);
  }
  g.dx = BasicTensor<T>(dy.shape());
  const double m = static_cast<double>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * channels + c;
      g.dx[i] = static_cast<T>(
          coef[c] * (m * dy[i] - sum_dy[c] - static_cast<double>(x_hat[i]) * sum_dy_xhat[c]));
    }
  return g;
}

// ---------------------------------------------------------------------------

template <typename T>
MaxPoolResult<T> maxpool2x2(const BasicTensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("maxpool2x2: input must be [N,H,W,C], got " +
                                      shape_string(x.shape()));
  if (x.dim(1) % 2 || x.dim(2) % 2)
    throw ShapeError("maxpool2x2: spatial dims must be even, got " + shape_string(x.shape()));
  if (x.size() > UINT32_MAX) throw ShapeError("maxpool2x2: input too large");
  MaxPoolResult<T> r;
  kernels::maxpool2x2_forward(x, r.y, r.argmax);
  return r;
}

template <typename T>
BasicTensor<T> maxpool2x2_backward(const BasicTensor<T>& dy,
                                   const std::vector<std::uint32_t>& argmax,
                                   const Shape& input_shape) {
  if (dy.size() != argmax.size())
    throw ShapeError("maxpool2x2_backward: gradient size does not match cached argmax");
  BasicTensor<T> dx(input_shape);
  kernels::maxpool2x2_backward(dy, argmax, dx);
  return dx;
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> dropout_mask(Rng& rng, const DropoutSpec& spec, const Shape& shape) {
  if (!(spec.rate >= 0.0 && spec.rate < 1.0))
    throw ParameterError("dropout: rate must be in [0, 1), got " + std::to_string(spec.rate));
  BasicTensor<T> mask(shape);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - spec.rate));
  for (auto& m : mask.values()) m = rng.next_double() < spec.rate ? T(0) : keep_scale;
  return mask;
}

template <typename T>
BasicTensor<T> apply_mask(const BasicTensor<T>& x, const BasicTensor<T>& mask) {
  return mul(x, mask);
}

template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, const DropoutSpec& spec, Rng& rng, Mode mode,
                       BasicTensor<T>* mask_out) {
  if (!(spec.rate >= 0.0 && spec.rate < 1.0))
    throw ParameterError("dropout: rate must be in [0, 1), got " + std::to_string(spec.rate));
  if (mode == Mode::kEval || spec.rate == 0.0) {
    if (mask_out) *mask_out = BasicTensor<T>::full(x.shape(), T(1));
    return x;
  }
  BasicTensor<T> mask = dropout_mask<T>(rng, spec, x.shape());
  BasicTensor<T> y = apply_mask(x, mask);
  if (mask_out) *mask_out = std::move(mask);
  return y;
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  if (x.shape() != dy.shape())
    throw ShapeError("relu_backward: shape mismatch " + shape_string(x.shape()) + " vs " +
                     shape_string(dy.shape()));
  BasicTensor<T> dx(x.shape());
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <typename T>
BasicTensor<T> flatten(const BasicTensor<T>& x) {
  if (x.rank() < 2) return x.reshaped({1, x.size()});
  return x.reshaped({x.dim(0), x.size() / x.dim(0)});
}

template <typename T>
BasicTensor<T> unflatten(const BasicTensor<T>& x, const Shape& shape) {
  return x.reshaped(shape);
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  if (logits.rank() != 2)
    throw ShapeError("softmax: input must be [N,C], got " + shape_string(logits.shape()));
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  BasicTensor<T> p(logits.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const T* z = logits.data() + r * c;
    T* out = p.data() + r * c;
    const T zmax = *std::max_element(z, z + c);
    double total = 0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(static_cast<double>(z[j] - zmax));
    for (std::size_t j = 0; j < c; ++j)
      out[j] = static_cast<T>(std::exp(static_cast<double>(z[j] - zmax)) / total);
  }
  return p;
}

// ---------------------------------------------------------------------------

template <typename T>
DenseParams<T> DenseParams<T>::init(Rng& rng, std::size_t fan_in, std::size_t units) {
  return {glorot_uniform<T>(rng, fan_in, units, {fan_in, units}), BasicTensor<T>({units})};
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const DenseParams<T>& p) {
  if (x.rank() != 2 || x.dim(1) != p.fan_in())
    throw ShapeError("dense: input " + shape_string(x.shape()) + " does not match fan_in " +
                     std::to_string(p.fan_in()));
  const std::size_t n = x.dim(0), units = p.units();
  BasicTensor<T> y({n, units});
  kernels::gemm(kernels::Trans::kNo, kernels::Trans::kNo, n, units, p.fan_in(), x.data(),
                p.fan_in(), p.weights.data(), units, false, y.data(), units);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t u = 0; u < units; ++u) y[r * units + u] += p.bias[u];
  return y;
}

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& x, const DenseParams<T>& p,
                             const BasicTensor<T>& dy) {
  const std::size_t n = x.dim(0), fan_in = p.fan_in(), units = p.units();
  if (dy.shape() != Shape{n, units})
    throw ShapeError("dense_backward: upstream gradient " + shape_string(dy.shape()) +
                     " does not match output [" + std::to_string(n) + ", " +
                     std::to_string(units) + "]");
  using kernels::Trans;
  DenseGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(p.weights.shape()),
                  BasicTensor<T>({units})};
  kernels::gemm(Trans::kNo, Trans::kYes, n, fan_in, units, dy.data(), units, p.weights.data(),
                units, false, g.dx.data(), fan_in);
  kernels::gemm(Trans::kYes, Trans::kNo, fan_in, units, n, x.data(), fan_in, dy.data(), units,
                false, g.dweights.data(), units);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t u = 0; u < units; ++u) g.dbias[u] += dy[r * units + u];
  return g;
}

// ---------------------------------------------------------------------------

template <typename T>
void Layer<T>::require_cache(bool ok) const {
  if (!ok)
    throw StateError("layer '" + name_ + "': backward called without a preceding train-mode forward");
}

template <typename T>
InputLayer<T>::InputLayer(std::string name, Shape sample_shape)
    : Layer<T>(std::move(name)), sample_shape_(std::move(sample_shape)) {}

template <typename T>
Shape InputLayer<T>::output_shape(const Shape&) const {
  return sample_shape_;
}

template <typename T>
BasicTensor<T> InputLayer<T>::forward(const BasicTensor<T>& x, Mode, Rng&) {
  Shape expect{x.rank() ? x.dim(0) : 0};
  expect.insert(expect.end(), sample_shape_.begin(), sample_shape_.end());
  if (x.shape() != expect)
    throw ShapeError("input layer: expected [N, " +
                     shape_string(sample_shape_).substr(1) + ", got " + shape_string(x.shape()));
  return x;
}

template <typename T>
Conv2DLayer<T>::Conv2DLayer(std::string name, ConvParams<T> params, bool need_input_grad)
    : Layer<T>(std::move(name)), params_(std::move(params)), need_input_grad_(need_input_grad) {}

template <typename T>
Shape Conv2DLayer<T>::output_shape(const Shape& input) const {
  require_conv_input(Shape{1, input.at(0), input.at(1), input.at(2)}, params_.in_channels());
  return {input[0] - 2, input[1] - 2, params_.out_channels()};
}

template <typename T>
BasicTensor<T> Conv2DLayer<T>::forward(const BasicTensor<T>& x, Mode mode, Rng&) {
  BasicTensor<T> z = conv2d(x, params_);
  if (mode == Mode::kTrain && gate_.shape() == z.shape())
    z = apply_mask(z, gate_);
  else
    for (auto& v : z.values()) v = v > T(0) ? v : T(0);
  cached_ = mode == Mode::kTrain;
  if (cached_) {
    input_ = x;
    output_ = z;
  } else {
    input_ = {};
    output_ = {};
  }
  return z;
}

template <typename T>
BasicTensor<T> Conv2DLayer<T>::backward(const BasicTensor<T>& dy) {
  this->require_cache(cached_);
  const BasicTensor<T> dz = gate_.empty() ? relu_backward(output_, dy) : apply_mask(dy, gate_);
  ConvGrads<T> g = conv2d_backward(input_, params_, dz, need_input_grad_);
  dweights_ = std::move(g.dweights);
  dbias_ = std::move(g.dbias);
  return std::move(g.dx);
}

namespace {

template <typename T>
BasicTensor<T> relu_gate(const BasicTensor<T>& out) {
  BasicTensor<T> g(out.shape());
  for (std::size_t i = 0; i < out.size(); ++i) g[i] = out[i] > T(0) ? T(1) : T(0);
  return g;
}

}  // namespace

template <typename T>
void Conv2DLayer<T>::freeze_switches(bool frozen) {
  gate_ = frozen && cached_ ? relu_gate(output_) : BasicTensor<T>{};
}

template <typename T>
std::vector<ParamRef<T>> Conv2DLayer<T>::parameters() {
  if (dweights_.shape() != params_.weights.shape()) {
    dweights_ = BasicTensor<T>(params_.weights.shape());
    dbias_ = BasicTensor<T>(params_.bias.shape());
  }
  return {{this->name() + ".weight", &params_.weights, &dweights_},
          {this->name() + ".bias", &params_.bias, &dbias_}};
}

template <typename T>
std::vector<StateRef<T>> Conv2DLayer<T>::state() {
  return {{this->name() + ".weight", &params_.weights, true},
          {this->name() + ".bias", &params_.bias, true}};
}

template <typename T>
BatchNormLayer<T>::BatchNormLayer(std::string name, BatchNormParams<T> params)
    : Layer<T>(std::move(name)), params_(std::move(params)) {}

template <typename T>
BasicTensor<T> BatchNormLayer<T>::forward(const BasicTensor<T>& x, Mode mode, Rng&) {
  cached_ = mode == Mode::kTrain;
  if (!cached_) cache_ = {};
  return batchnorm(x, params_, mode, cached_ ? &cache_ : nullptr);
}

template <typename T>
BasicTensor<T> BatchNormLayer<T>::backward(const BasicTensor<T>& dy) {
  this->require_cache(cached_);
  BatchNormGrads<T> g = batchnorm_backward(dy, params_, cache_);
  dgamma_ = std::move(g.dgamma);
  dbeta_ = std::move(g.dbeta);
  return std::move(g.dx);
}

template <typename T>
std::vector<ParamRef<T>> BatchNormLayer<T>::parameters() {
  if (dgamma_.shape() != params_.gamma.shape()) {
    dgamma_ = BasicTensor<T>(params_.gamma.shape());
    dbeta_ = BasicTensor<T>(params_.beta.shape());
  }
  return {{this->name() + ".gamma", &params_.gamma, &dgamma_},
          {this->name() + ".beta", &params_.beta, &dbeta_}};
}

template <typename T>
std::vector<StateRef<T>> BatchNormLayer<T>::state() {
  return {{this->name() + ".gamma", &params_.gamma, true},
          {this->name() + ".beta", &params_.beta, true},
          {this->name() + ".moving_mean", &params_.moving_mean, false},
          {this->name() + ".moving_var", &params_.moving_var, false}};
}

template <typename T>
Shape MaxPoolLayer<T>::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[0] % 2 || input[1] % 2)
    throw ShapeError("maxpool2x2: spatial dims must be even, got " + shape_string(input));
  return {input[0] / 2, input[1] / 2, input[2]};
}

template <typename T>
BasicTensor<T> MaxPoolLayer<T>::forward(const BasicTensor<T>& x, Mode mode, Rng&) {
  if (frozen_ && mode == Mode::kTrain && x.shape() == input_shape_) {
    const Shape& s = x.shape();
    BasicTensor<T> y({s[0], s[1] / 2, s[2] / 2, s[3]});
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[argmax_[i]];
    return y;
  }
  MaxPoolResult<T> r = maxpool2x2(x);
  cached_ = mode == Mode::kTrain;
  input_shape_ = x.shape();
  if (cached_)
    argmax_ = std::move(r.argmax);
  else
    argmax_.clear();
  return std::move(r.y);
}

template <typename T>
BasicTensor<T> MaxPoolLayer<T>::backward(const BasicTensor<T>& dy) {
  this->require_cache(cached_);
  return maxpool2x2_backward(dy, argmax_, input_shape_);
}

template <typename T>
DropoutLayer<T>::DropoutLayer(std::string name, DropoutSpec spec)
    : Layer<T>(std::move(name)), spec_(spec) {
  if (!(spec.rate >= 0.0 && spec.rate < 1.0))
    throw ParameterError("dropout: rate must be in [0, 1), got " + std::to_string(spec.rate));
}

template <typename T>
BasicTensor<T> DropoutLayer<T>::forward(const BasicTensor<T>& x, Mode mode, Rng& rng) {
  cached_ = mode == Mode::kTrain;
  if (mode == Mode::kEval) return x;
  if (!(frozen_ && mask_.shape() == x.shape())) mask_ = dropout_mask<T>(rng, spec_, x.shape());
  return apply_mask(x, mask_);
}

template <typename T>
BasicTensor<T> DropoutLayer<T>::backward(const BasicTensor<T>& dy) {
  this->require_cache(cached_);
  return apply_mask(dy, mask_);
}

template <typename T>
Shape FlattenLayer<T>::output_shape(const Shape& input) const {
  return {shape_size(input)};
}

template <typename T>
BasicTensor<T> FlattenLayer<T>::forward(const BasicTensor<T>& x, Mode mode, Rng&) {
  cached_ = mode == Mode::kTrain;
  input_shape_ = x.shape();
  return flatten(x);
}

template <typename T>
BasicTensor<T> FlattenLayer<T>::backward(const BasicTensor<T>& dy) {
  this->require_cache(cached_);
  return unflatten(dy, input_shape_);
}

template <typename T>
DenseLayer<T>::DenseLayer(std::string name, DenseParams<T> params, Activation activation)
    : Layer<T>(std::move(name)), params_(std::move(params)), activation_(activation) {}

template <typename T>
Shape DenseLayer<T>::output_shape(const Shape& input) const {
  if (input.size() != 1 || input[0] != params_.fan_in())
    throw ShapeError("dense: input " + shape_string(input) + " does not match fan_in " +
                     std::to_string(params_.fan_in()));
  return {params_.units()};
}

template <typename T>
BasicTensor<T> DenseLayer<T>::forward(const BasicTensor<T>& x, Mode mode, Rng&) {
  BasicTensor<T> y = dense(x, params_);
  if (activation_ == Activation::kRelu && mode == Mode::kTrain && gate_.shape() == y.shape())
    y = apply_mask(y, gate_);
  else if (activation_ == Activation::kRelu)
    for (auto& v : y.values()) v = v > T(0) ? v : T(0);
  cached_ = mode == Mode::kTrain;
  if (cached_) {
    input_ = x;
    output_ = y;
  } else {
    input_ = {};
    output_ = {};
  }
  return y;
}

template <typename T>
BasicTensor<T> DenseLayer<T>::backward(const BasicTensor<T>& dy) {
  this->require_cache(cached_);
  DenseGrads<T> g = activation_ == Activation::kRelu
                        ? dense_backward(input_, params_,
                                         gate_.empty() ? relu_backward(output_, dy)
                                                       : apply_mask(dy, gate_))
                        : dense_backward(input_, params_, dy);
  dweights_ = std::move(g.dweights);
  dbias_ = std::move(g.dbias);
  return std::move(g.dx);
}

template <typename T>
void DenseLayer<T>::freeze_switches(bool frozen) {
  gate_ = frozen && cached_ && activation_ == Activation::kRelu ? relu_gate(output_)
                                                                : BasicTensor<T>{};
}

template <typename T>
std::vector<ParamRef<T>> DenseLayer<T>::parameters() {
  if (dweights_.shape() != params_.weights.shape()) {
    dweights_ = BasicTensor<T>(params_.weights.shape());
    dbias_ = BasicTensor<T>(params_.bias.shape());
  }
  return {{this->name() + ".weight", &params_.weights, &dweights_},
          {this->name() + ".bias", &params_.bias, &dbias_}};
}

template <typename T>
std::vector<StateRef<T>> DenseLayer<T>::state() {
  return {{this->name() + ".weight", &params_.weights, true},
          {this->name() + ".bias", &params_.bias, true}};
}

#define ASL_INSTANTIATE_LAYERS(T)                                                              \
  template BasicTensor<T> glorot_uniform<T>(Rng&, std::size_t, std::size_t, const Shape&);     \
  template struct ConvParams<T>;                                                               \
  template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const ConvParams<T>&);              \
  template ConvGrads<T> conv2d_backward<T>(const BasicTensor<T>&, const ConvParams<T>&,        \
                                           const BasicTensor<T>&, bool);                       \
  template struct BatchNormParams<T>;                                                          \
  template BasicTensor<T> batchnorm<T>(const BasicTensor<T>&, BatchNormParams<T>&, Mode,       \
                                       BatchNormCache<T>*);                                    \
  template BatchNormGrads<T> batchnorm_backward<T>(const BasicTensor<T>&,                      \
                                                   const BatchNormParams<T>&,                  \
                                                   const BatchNormCache<T>&);                  \
  template MaxPoolResult<T> maxpool2x2<T>(const BasicTensor<T>&);                              \
  template BasicTensor<T> maxpool2x2_backward<T>(const BasicTensor<T>&,                        \
                                                 const std::vector<std::uint32_t>&,            \
                                                 const Shape&);                                \
  template BasicTensor<T> dropout_mask<T>(Rng&, const DropoutSpec&, const Shape&);             \
  template BasicTensor<T> dropout<T>(const BasicTensor<T>&, const DropoutSpec&, Rng&, Mode,    \
                                     BasicTensor<T>*);                                         \
  template BasicTensor<T> apply_mask<T>(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                      \
  template BasicTensor<T> relu_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);      \
  template BasicTensor<T> flatten<T>(const BasicTensor<T>&);                                   \
  template BasicTensor<T> unflatten<T>(const BasicTensor<T>&, const Shape&);                   \
  template BasicTensor<T> softmax<T>(const BasicTensor<T>&);                                   \
  template struct DenseParams<T>;                                                              \
  template BasicTensor<T> dense<T>(const BasicTensor<T>&, const DenseParams<T>&);              \
  template DenseGrads<T> dense_backward<T>(const BasicTensor<T>&, const DenseParams<T>&,       \
                                           const BasicTensor<T>&);                             \
  template class Layer<T>;                                                                     \
  template class InputLayer<T>;                                                                \
  template class Conv2DLayer<T>;                                                               \
  template class BatchNormLayer<T>;                                                            \
  template class MaxPoolLayer<T>;                                                              \
  template class DropoutLayer<T>;                                                              \
  template class FlattenLayer<T>;                                                              \
  template class DenseLayer<T>;

ASL_INSTANTIATE_LAYERS(float)
ASL_INSTANTIATE_LAYERS(double)

#undef ASL_INSTANTIATE_LAYERS

}  // namespace asl
