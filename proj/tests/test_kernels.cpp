#include <gtest/gtest.h>

#include <vector>

#include "asl/kernels.hpp"
#include "asl/layers.hpp"
#include "asl/ops.hpp"
#include "asl/reference.hpp"
#include "test_util.hpp"

namespace asl {
namespace {

using kernels::Trans;

// Covers all four transpose combinations and sizes that straddle the block edges.
TEST(Gemm, TransposeVariantsMatchTripleLoop) {
  Rng r(21);
  for (std::size_t m : {1u, 7u, 33u, 70u})
    for (std::size_t n : {1u, 17u, 65u})
      for (std::size_t k : {1u, 9u, 130u}) {
        Tensor a = uniform<float>(r, -1.0f, 1.0f, {m, k});
        Tensor b = uniform<float>(r, -1.0f, 1.0f, {k, n});
        Tensor want = reference::matmul(a, b);
        Tensor at({k, m}), bt({n, k});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j) at.at({j, i}) = a.at({i, j});
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < n; ++j) bt.at({j, i}) = b.at({i, j});
        for (bool ta : {false, true})
          for (bool tb : {false, true}) {
            Tensor c({m, n});
            kernels::gemm(ta ? Trans::kYes : Trans::kNo, tb ? Trans::kYes : Trans::kNo, m, n, k,
                          ta ? at.data() : a.data(), ta ? m : k, tb ? bt.data() : b.data(),
                          tb ? k : n, false, c.data(), n);
            ASSERT_LT(test::max_abs_diff(c, want), 1e-4) << m << " " << n << " " << k;
          }
      }
}

TEST(Gemm, AccumulateAddsIntoC) {
  Rng r(22);
  Tensor a = uniform<float>(r, -1.0f, 1.0f, {5, 6});
  Tensor b = uniform<float>(r, -1.0f, 1.0f, {6, 4});
  Tensor c = Tensor::full({5, 4}, 2.0f);
  kernels::gemm(Trans::kNo, Trans::kNo, 5, 4, 6, a.data(), 6, b.data(), 4, true, c.data(), 4);
  Tensor want = reference::matmul(a, b);
  for (auto& v : want.values()) v += 2.0f;
  EXPECT_LT(test::max_abs_diff(c, want), 1e-6);
}

TEST(Im2col, Col2imIsAdjoint) {
  // <im2col(x), c> == <x, col2im(c)> for random x and c.
  Rng r(23);
  const std::size_t h = 6, w = 5, c = 3, ho = h - 2, wo = w - 2;
  TensorD x = uniform<double>(r, -1.0, 1.0, {h, w, c});
  TensorD col = uniform<double>(r, -1.0, 1.0, {ho * wo, 9 * c});
  TensorD unfolded({ho * wo, 9 * c});
  kernels::im2col3x3(x.data(), h, w, c, unfolded.data());
  TensorD folded({h, w, c});
  kernels::col2im3x3(col.data(), h, w, c, folded.data());
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < col.size(); ++i) lhs += unfolded[i] * col[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * folded[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(ConvKernel, BackwardMatchesReference) {
  Rng r(24);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 1 + r.below(3), h = 3 + r.below(6), w = 3 + r.below(6);
    const std::size_t cin = 1 + r.below(5), cout = 1 + r.below(6);
    Tensor x = uniform<float>(r, -1.0f, 1.0f, {n, h, w, cin});
    ConvParams<float> p{uniform<float>(r, -1.0f, 1.0f, {3, 3, cin, cout}),
                        uniform<float>(r, -1.0f, 1.0f, {cout})};
    Tensor dy = uniform<float>(r, -1.0f, 1.0f, {n, h - 2, w - 2, cout});
    auto got = conv2d_backward(x, p, dy);
    auto want = reference::conv2d_backward(x, p.weights, dy);
    EXPECT_LT(test::max_abs_diff(got.dx, want.dx), 1e-5);
    EXPECT_LT(test::max_abs_diff(got.dweights, want.dweights), 1e-4);
    EXPECT_LT(test::max_abs_diff(got.dbias, want.dbias), 1e-4);
  }
}

TEST(ConvKernel, BackwardWithoutInputGradLeavesDxEmpty) {
  Rng r(25);
  Tensor x = uniform<float>(r, -1.0f, 1.0f, {1, 5, 5, 2});
  auto p = ConvParams<float>::init(r, 2, 3);
  auto g = conv2d_backward(x, p, Tensor({1, 3, 3, 3}, 1.0f), false);
  EXPECT_TRUE(g.dx.empty());
  EXPECT_EQ(g.dweights.shape(), (Shape{3, 3, 2, 3}));
}

TEST(MaxPoolKernel, BackwardMatchesReference) {
  Rng r(26);
  Tensor x = uniform<float>(r, -1.0f, 1.0f, {2, 8, 6, 3});
  Tensor dy = uniform<float>(r, -1.0f, 1.0f, {2, 4, 3, 3});
  auto fw = maxpool2x2(x);
  EXPECT_EQ(maxpool2x2_backward(dy, fw.argmax, x.shape()), reference::maxpool2x2_backward(x, dy));
}

}  // namespace
}  // namespace asl
