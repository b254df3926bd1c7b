// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numeric>

#include "gdn/kernels/parallel.hpp"
#include "gdn/kernels/serial.hpp"
#include "gdn/layers.hpp"
#include "gdn/optim.hpp"
#include "oracles.hpp"

using namespace gdn;

namespace {

std::vector<double> bias_of(const Conv2d<double>& c) {
  return {c.bias.value.values().begin(), c.bias.value.values().end()};
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

// ---------------------------------------------------------------- conv

TEST(Conv, UnitKernelIsIdentity) {
  Conv2d<double> conv(1, 1, 1);
  conv.weight.value.fill(1.0);
  Rng rng(1);
  const auto x = oracle::random_tensor({2, 1, 5, 6}, rng);
  EXPECT_EQ(conv.forward(x), x);
}

TEST(Conv, OnesKernelOnOnesImage) {
  Conv2d<double> conv(1, 1, 3, 1, 1);
  conv.weight.value.fill(1.0);
  const auto y = conv.forward(Tensor({1, 1, 3, 3}, 1.0));
  EXPECT_EQ(y(0, 0, 1, 1), 9.0);
  EXPECT_EQ(y(0, 0, 0, 0), 4.0);
  EXPECT_EQ(y(0, 0, 2, 2), 4.0);
  EXPECT_EQ(y(0, 0, 0, 1), 6.0);
}

TEST(Conv, MatchesSlidingWindowOnRandomGeometry) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = 1 + 2 * rng.below(3), stride = 1 + rng.below(2), pad = rng.below(3);
    const std::size_t dil = 1 + rng.below(2), in_c = 1 + rng.below(3), out_c = 1 + rng.below(3);
    const std::size_t ext = (k - 1) * dil + 1;
    const std::size_t h = std::max<std::size_t>(ext, 3 + rng.below(6)), w = std::max<std::size_t>(ext, 3 + rng.below(6));
    Conv2d<double> conv(in_c, out_c, k, stride, pad, dil);
    Rng init(100 + t);
    conv.init_he(init);
    for (auto& b : conv.bias.value.values()) b = rng.uniform(-1, 1);
    const auto x = oracle::random_tensor({2, in_c, h, w}, rng);
    const auto y = conv.forward(x);
    const auto ref = oracle::conv2d(x, conv.weight.value, bias_of(conv), stride, pad, dil);
    ASSERT_EQ(y.shape(), ref.shape());
    EXPECT_LE(oracle::max_abs_diff(y.values(), ref.values()), 1e-12);
  }
}

TEST(Conv, DilationEqualsZeroInterleavedKernel) {
  Rng rng(3);
  Conv2d<double> dilated(2, 3, 3, 1, 2, 2);
  dilated.init_he(rng);
  const auto x = oracle::random_tensor({1, 2, 9, 8}, rng);
  const auto expanded = oracle::dilate_kernel(dilated.weight.value, 2);
  ASSERT_EQ(expanded.h(), 5u);
  const auto ref = oracle::conv2d(x, expanded, bias_of(dilated), 1, 2, 1);
  EXPECT_LE(oracle::max_abs_diff(dilated.forward(x).values(), ref.values()), 1e-12);
}

TEST(Conv, EvenKernelRejected) { EXPECT_THROW(Conv2d<double>(1, 1, 2), std::invalid_argument); }

TEST(ConvBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(4);
  Conv2d<double> conv(2, 2, 3, 1, 1);
  conv.init_he(rng);
  const auto x = oracle::random_tensor({1, 2, 4, 4}, rng);
  conv.zero_grad();
  const auto gx = conv.backward(x, Tensor({1, 2, 4, 4}));
  EXPECT_EQ(gx, Tensor(x.shape()));
  EXPECT_EQ(conv.weight.grad, Tensor(conv.weight.value.shape()));
  EXPECT_EQ(conv.bias.grad, Tensor(conv.bias.value.shape()));
}

TEST(ConvBackward, BiasGradientIsUpstreamSum) {
  Rng rng(5);
  Conv2d<double> conv(2, 3, 3, 2, 1);
  conv.init_he(rng);
  const auto x = oracle::random_tensor({3, 2, 7, 6}, rng);
  const auto y = conv.forward(x);
  const auto gy = oracle::random_tensor(y.shape(), rng);
  conv.zero_grad();
  conv.backward(x, gy);
  for (std::size_t o = 0; o < 3; ++o) {
    double s = 0.0;
    for (std::size_t n = 0; n < 3; ++n)
      for (double v : gy.plane(n, o)) s += v;
    EXPECT_NEAR(conv.bias.grad.values()[o], s, 1e-12);
  }
}

TEST(ConvBackward, FiniteDifferencesOnSmallInput) {
  Rng rng(6);
  Conv2d<double> conv(1, 1, 3);
  conv.init_he(rng);
  auto x = oracle::random_tensor({1, 1, 4, 4}, rng);
  const auto r = oracle::random_tensor(conv.forward(x).shape(), rng);
  conv.zero_grad();
  const auto gx = conv.backward(x, r);
  auto f = [&] { return dot(conv.forward(x).values(), r.values()); };
  EXPECT_LE(gradcheck(f, x.values(), gx.values()).max_rel_error, 1e-5);
  const std::vector<double> gw(conv.weight.grad.values().begin(), conv.weight.grad.values().end());
  EXPECT_LE(gradcheck(f, conv.weight.value.values(), gw).max_rel_error, 1e-5);
}

TEST(ConvKernels, SerialAndParallelAgree) {
  Rng rng(7);
  const kernels::ConvGeometry g{3, 11, 9, 4, 3, 3, 2, 1, 2};
  const std::size_t batch = 2;
  const auto x = oracle::random_tensor({batch, 3, 11, 9}, rng);
  const auto w = oracle::random_tensor({4, 3, 3, 3}, rng);
  const std::vector<double> b{0.1, -0.2, 0.3, 0.0};
  const std::size_t ny = batch * 4 * g.out_h() * g.out_w();
  std::vector<double> y1(ny), y2(ny);
  kernels::serial::conv2d_forward<double>(g, batch, x.values(), w.values(), b, y1);
  kernels::parallel::conv2d_forward<double>(g, batch, x.values(), w.values(), b, y2);
  EXPECT_LE(oracle::max_abs_diff(y1, y2), 1e-12);

  const auto gy = oracle::random_tensor({batch, 4, g.out_h(), g.out_w()}, rng);
  std::vector<double> gx1(x.size()), gx2(x.size()), gw1(w.size()), gw2(w.size()), gb1(4), gb2(4);
  kernels::serial::conv2d_backward<double>(g, batch, x.values(), w.values(), gy.values(), gx1, gw1, gb1);
  kernels::parallel::conv2d_backward<double>(g, batch, x.values(), w.values(), gy.values(), gx2, gw2, gb2);
  EXPECT_LE(oracle::max_abs_diff(gx1, gx2), 1e-12);
  EXPECT_LE(oracle::max_abs_diff(gw1, gw2), 1e-12);
  EXPECT_LE(oracle::max_abs_diff(gb1, gb2), 1e-12);
}

// ---------------------------------------------------------------- relu / maxpool / fc

TEST(Relu, NegativeInputsAndTheirGradientsVanish) {
  const Tensor x({1, 1, 1, 3}, std::vector<double>{-2.0, -0.5, 3.0});
  const auto y = relu_forward(x);
  EXPECT_EQ(y.values()[0], 0.0);
  EXPECT_EQ(y.values()[2], 3.0);
  const auto g = relu_backward(x, Tensor(x.shape(), 1.0));
  EXPECT_EQ(g.values()[0], 0.0);
  EXPECT_EQ(g.values()[1], 0.0);
  EXPECT_EQ(g.values()[2], 1.0);
}

TEST(Maxpool, RoutesGradientToMaximum) {
  const Tensor x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const auto r = maxpool2_forward(x);
  EXPECT_EQ(r.y.values()[0], 4.0);
  const auto g = maxpool2_backward(r, Tensor({1, 1, 1, 1}, 5.0));
  EXPECT_EQ(g, Tensor(x.shape(), std::vector<double>{0, 0, 0, 5}));
}

TEST(Maxpool, TiesGoToLowestFlatIndex) {
  const auto r = maxpool2_forward(Tensor({1, 1, 2, 2}, 7.0));
  const auto g = maxpool2_backward(r, Tensor({1, 1, 1, 1}, 1.0));
  EXPECT_EQ(g, Tensor({1, 1, 2, 2}, std::vector<double>{1, 0, 0, 0}));
}

TEST(Linear, FiniteDifferences) {
  Rng rng(8);
  Linear<double> fc(5, 3);
  fc.init_glorot(rng);
  for (auto& b : fc.bias.value.values()) b = rng.uniform(-1, 1);
  auto x = oracle::random_matrix(2, 5, rng);
  const auto r = oracle::random_matrix(2, 3, rng);
  fc.zero_grad();
  const auto gx = fc.backward(x, r);
  auto f = [&] { return dot(fc.forward(x).values(), r.values()); };
  EXPECT_LE(gradcheck(f, x.values(), gx.values()).max_rel_error, 1e-5);
  const std::vector<double> gw(fc.weight.grad.values().begin(), fc.weight.grad.values().end());
  EXPECT_LE(gradcheck(f, fc.weight.value.values(), gw).max_rel_error, 1e-5);
  const std::vector<double> gb(fc.bias.grad.values().begin(), fc.bias.grad.values().end());
  EXPECT_LE(gradcheck(f, fc.bias.value.values(), gb).max_rel_error, 1e-5);
}

TEST(Linear, InputWidthMismatchThrows) {
  Linear<double> fc(4, 2);
  EXPECT_THROW(fc.forward(Matrix(1, 3)), ShapeError);
}

// ---------------------------------------------------------------- transposed conv

TEST(Tconv, BilinearKernelIsCaffeStyle) {
  const auto k = bilinear_kernel_1d(4);
  ASSERT_EQ(k.size(), 4u);
  EXPECT_DOUBLE_EQ(k[0], 0.25);
  EXPECT_DOUBLE_EQ(k[1], 0.75);
  EXPECT_DOUBLE_EQ(k[2], 0.75);
  EXPECT_DOUBLE_EQ(k[3], 0.25);
}

TEST(Tconv, BilinearInitKeepsConstantsInTheInterior) {
  TransposedConv2d<double> up(2, 2, 4, 2);
  up.init_bilinear();
  const auto y = up.forward(Tensor({1, 2, 5, 5}, 3.0), 10, 10);
  ASSERT_EQ(y.shape(), (Shape4{1, 2, 10, 10}));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 1; i + 1 < 10; ++i)
      for (std::size_t j = 1; j + 1 < 10; ++j) EXPECT_NEAR(y(0, c, i, j), 3.0, 1e-12);
}

TEST(Tconv, BilinearInitMatchesHalfPixelUpsamplingInTheInterior) {
  TransposedConv2d<double> up(1, 1, 4, 2);
  up.init_bilinear();
  const Tensor x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const auto y = up.forward(x, 4, 4);
  const auto ref = oracle::bilinear_2x_half_pixel(x);
  for (std::size_t i = 1; i < 3; ++i)
    for (std::size_t j = 1; j < 3; ++j) EXPECT_NEAR(y(0, 0, i, j), ref(0, 0, i, j), 1e-12);
}

TEST(Tconv, LargerFactorMatchesHalfPixelOnRandomInput) {
  TransposedConv2d<double> up(1, 1, 4, 2);
  up.init_bilinear();
  Rng rng(9);
  const auto x = oracle::random_tensor({1, 1, 4, 5}, rng);
  const auto y = up.forward(x, 8, 10);
  const auto ref = oracle::bilinear_2x_half_pixel(x);
  for (std::size_t i = 1; i + 1 < 8; ++i)
    for (std::size_t j = 1; j + 1 < 10; ++j) EXPECT_NEAR(y(0, 0, i, j), ref(0, 0, i, j), 1e-12);
}

TEST(Tconv, FiniteDifferences) {
  Rng rng(10);
  TransposedConv2d<double> up(2, 2, 4, 2);
  for (auto& v : up.weight.value.values()) v = rng.uniform(-1, 1);
  auto x = oracle::random_tensor({1, 2, 3, 3}, rng);
  const auto r = oracle::random_tensor({1, 2, 6, 6}, rng);
  up.zero_grad();
  const auto gx = up.backward(x, r);
  auto f = [&] { return dot(up.forward(x, 6, 6).values(), r.values()); };
  EXPECT_LE(gradcheck(f, x.values(), gx.values()).max_rel_error, 1e-5);
  const std::vector<double> gw(up.weight.grad.values().begin(), up.weight.grad.values().end());
  EXPECT_LE(gradcheck(f, up.weight.value.values(), gw).max_rel_error, 1e-5);
}

TEST(TconvKernels, SerialAndParallelAgree) {
  Rng rng(11);
  const kernels::TconvGeometry g{3, 4, 5, 2, 4, 2};
  const auto x = oracle::random_tensor({2, 3, 4, 5}, rng);
  const auto w = oracle::random_tensor({3, 2, 4, 4}, rng);
  const std::size_t ny = 2 * 2 * g.full_h() * g.full_w();
  std::vector<double> y1(ny), y2(ny);
  kernels::serial::tconv2d_forward<double>(g, 2, x.values(), w.values(), y1);
  kernels::parallel::tconv2d_forward<double>(g, 2, x.values(), w.values(), y2);
  EXPECT_LE(oracle::max_abs_diff(y1, y2), 1e-12);
}

// ---------------------------------------------------------------- properties

TEST(LayerProperty, ReluIsIdempotent) {
  Rng rng(12);
  for (int t = 0; t < 10; ++t) {
    const auto x = oracle::random_tensor({1 + rng.below(3), 2, 5, 5}, rng);
    const auto once = relu_forward(x);
    EXPECT_EQ(relu_forward(once), once);
  }
}

TEST(LayerProperty, MaxpoolEquivariantUnderBatchReordering) {
  Rng rng(13);
  const std::size_t batch = 4;
  const auto x = oracle::random_tensor({batch, 2, 6, 8}, rng);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Tensor xp(x.shape());
  for (std::size_t b = 0; b < batch; ++b)
    std::copy(x.item(perm[b]).begin(), x.item(perm[b]).end(), xp.item(b).begin());
  const auto y = maxpool2_forward(x).y;
  const auto yp = maxpool2_forward(xp).y;
  for (std::size_t b = 0; b < batch; ++b)
    EXPECT_TRUE(std::ranges::equal(yp.item(b), y.item(perm[b])));
}

TEST(LayerProperty, ConvGradientsOverRandomInstances) {
  Rng rng(14);
  for (int t = 0; t < 20; ++t) {
    const std::size_t dil = 1 + rng.below(2);
    Conv2d<double> conv(1 + rng.below(2), 1 + rng.below(2), 3, 1 + rng.below(2), rng.below(2), dil);
    conv.init_he(rng);
    auto x = oracle::random_tensor({1, conv.in_channels(), 5 + rng.below(3), 5 + rng.below(3)}, rng);
    const auto r = oracle::random_tensor(conv.forward(x).shape(), rng);
    conv.zero_grad();
    const auto gx = conv.backward(x, r);
    auto f = [&] { return dot(conv.forward(x).values(), r.values()); };
    EXPECT_LE(gradcheck(f, x.values(), gx.values()).max_rel_error, 1e-5);
  }
}
