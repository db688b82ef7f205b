// Parallel kernels against the serial reference oracles on the shapes the
// classifier actually runs. Run with OMP_NUM_THREADS set to compare scaling.
#include <benchmark/benchmark.h>

#include "asl/layers.hpp"
#include "asl/ops.hpp"
#include "asl/reference.hpp"

namespace {

using asl::Rng;
using asl::Tensor;

void BM_MatmulParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = asl::uniform<float>(rng, -1, 1, {n, n});
  const Tensor b = asl::uniform<float>(rng, -1, 1, {n, n});
  for (auto _ : state) benchmark::DoNotOptimize(asl::matmul(a, b));
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}
BENCHMARK(BM_MatmulParallel)->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_MatmulReference(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = asl::uniform<float>(rng, -1, 1, {n, n});
  const Tensor b = asl::uniform<float>(rng, -1, 1, {n, n});
  for (auto _ : state) benchmark::DoNotOptimize(asl::reference::matmul(a, b));
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}
BENCHMARK(BM_MatmulReference)->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

// {H, Cin, Cout}: conv2, conv3, conv4 of the model at batch 1.
struct ConvCase {
  Tensor x;
  asl::ConvParams<float> p;
};

ConvCase make_conv(const benchmark::State& state) {
  Rng rng(2);
  const auto h = static_cast<std::size_t>(state.range(0));
  const auto cin = static_cast<std::size_t>(state.range(1));
  const auto cout = static_cast<std::size_t>(state.range(2));
  return {asl::uniform<float>(rng, 0, 1, {1, h, h, cin}), asl::ConvParams<float>::init(rng, cin, cout)};
}

void conv_counters(benchmark::State& state) {
  const double h = static_cast<double>(state.range(0)) - 2;
  state.counters["GFLOP/s"] = benchmark::Counter(
      2.0 * h * h * 9 * static_cast<double>(state.range(1) * state.range(2)),
      benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

void BM_ConvForwardParallel(benchmark::State& state) {
  const ConvCase c = make_conv(state);
  for (auto _ : state) benchmark::DoNotOptimize(asl::conv2d(c.x, c.p));
  conv_counters(state);
}

void BM_ConvForwardReference(benchmark::State& state) {
  const ConvCase c = make_conv(state);
  for (auto _ : state) benchmark::DoNotOptimize(asl::reference::conv2d(c.x, c.p.weights, c.p.bias));
  conv_counters(state);
}

void BM_ConvBackwardParallel(benchmark::State& state) {
  const ConvCase c = make_conv(state);
  const Tensor y = asl::conv2d(c.x, c.p);
  for (auto _ : state) benchmark::DoNotOptimize(asl::conv2d_backward(c.x, c.p, y));
  conv_counters(state);
}

void BM_ConvBackwardReference(benchmark::State& state) {
  const ConvCase c = make_conv(state);
  const Tensor y = asl::conv2d(c.x, c.p);
  for (auto _ : state)
    benchmark::DoNotOptimize(asl::reference::conv2d_backward(c.x, c.p.weights, y));
  conv_counters(state);
}

#define ASL_CONV_SHAPES ->Args({48, 32, 64})->Args({46, 64, 128})->Args({22, 128, 256})->Unit(benchmark::kMillisecond)
BENCHMARK(BM_ConvForwardParallel) ASL_CONV_SHAPES;
BENCHMARK(BM_ConvForwardReference) ASL_CONV_SHAPES;
BENCHMARK(BM_ConvBackwardParallel) ASL_CONV_SHAPES;
BENCHMARK(BM_ConvBackwardReference) ASL_CONV_SHAPES;

void BM_MaxPoolParallel(benchmark::State& state) {
  Rng rng(3);
  const Tensor x = asl::uniform<float>(rng, -1, 1, {16, 44, 44, 128});
  for (auto _ : state) benchmark::DoNotOptimize(asl::maxpool2x2(x));
}
BENCHMARK(BM_MaxPoolParallel)->Unit(benchmark::kMillisecond);

void BM_MaxPoolReference(benchmark::State& state) {
  Rng rng(3);
  const Tensor x = asl::uniform<float>(rng, -1, 1, {16, 44, 44, 128});
  for (auto _ : state) benchmark::DoNotOptimize(asl::reference::maxpool2x2(x));
}
BENCHMARK(BM_MaxPoolReference)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
