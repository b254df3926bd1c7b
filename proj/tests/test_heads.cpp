// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numeric>

#include "gdn/heads.hpp"
#include "gdn/optim.hpp"
#include "oracles.hpp"

using namespace gdn;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

double seg_loss_of_logits(const Tensor& logits, const std::vector<ClassMap>& gt) {
  return seg_loss(softmax_pixelwise(logits), std::span<const ClassMap>(gt));
}

}  // namespace

// ---------------------------------------------------------------- softmax

TEST(Softmax, UniformLogitsGiveUniformDistribution) {
  const auto p = softmax_pixelwise(Tensor({2, 5, 3, 3}, 0.7));
  for (double v : p.values()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Softmax, ClosedFormTwoClasses) {
  Tensor x({1, 2, 1, 1});
  x(0, 1, 0, 0) = std::log(3.0);
  const auto p = softmax_pixelwise(x);
  EXPECT_NEAR(p(0, 0, 0, 0), 0.25, 1e-15);
  EXPECT_NEAR(p(0, 1, 0, 0), 0.75, 1e-15);
}

TEST(Softmax, ShiftInvariantAndNormalized) {
  Rng rng(1);
  const auto x = oracle::random_tensor({2, 4, 3, 5}, rng, -5, 5);
  const auto shifted = add(x, Tensor(x.shape(), 100.0));
  const auto p = softmax_pixelwise(x);
  EXPECT_LE(oracle::max_abs_diff(p.values(), softmax_pixelwise(shifted).values()), 1e-12);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 15; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < 4; ++c) s += p.plane(n, c)[i];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

// ---------------------------------------------------------------- seg loss

TEST(SegLoss, OneHotCorrectGivesZero) {
  Tensor p({1, 3, 2, 2});
  ClassMap g(2, 2);
  g.data = {0, 1, 2, 1};
  for (std::size_t k = 0; k < 4; ++k) p.plane(0, g.data[k])[k] = 1.0;
  const std::vector<ClassMap> gt{g};
  EXPECT_EQ(seg_loss(p, std::span<const ClassMap>(gt)), 0.0);
}

TEST(SegLoss, TwoPixelCase) {
  Tensor p({1, 2, 1, 2});
  p(0, 0, 0, 0) = 0.5;
  p(0, 1, 0, 0) = 0.5;
  p(0, 0, 0, 1) = 0.75;
  p(0, 1, 0, 1) = 0.25;
  ClassMap g(1, 2);
  g.data = {0, 1};
  const std::vector<ClassMap> gt{g};
  const double loss = seg_loss(p, std::span<const ClassMap>(gt));
  EXPECT_NEAR(loss, -(std::log(0.5) + std::log(0.25)) / 2.0, 1e-15);
  EXPECT_NEAR(loss, 1.0397, 1e-4);
}

TEST(SegLoss, IgnoredPixelsDoNotCount) {
  Rng rng(2);
  const auto logits = oracle::random_tensor({1, 3, 2, 2}, rng);
  ClassMap g(2, 2);
  g.data = {1, ClassMap::kIgnore, 2, ClassMap::kIgnore};
  ClassMap other = g;
  other.data[1] = 0;
  other.data[3] = 2;
  const std::vector<ClassMap> a{g};
  const auto p = softmax_pixelwise(logits);
  const double expected = -(std::log(p(0, 1, 0, 0)) + std::log(p(0, 2, 1, 0))) / 2.0;
  EXPECT_NEAR(seg_loss(p, std::span<const ClassMap>(a)), expected, 1e-14);
  const auto grad = seg_loss_backward(p, std::span<const ClassMap>(a));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(grad(0, c, 0, 1), 0.0);
    EXPECT_EQ(grad(0, c, 1, 1), 0.0);
  }
}

TEST(SegLoss, FiniteDifferencesThroughSoftmax) {
  Rng rng(3);
  auto logits = oracle::random_tensor({1, 3, 2, 2}, rng, -2, 2);
  const std::vector<ClassMap> gt{oracle::random_map(2, 2, 3, rng)};
  const auto grad = seg_loss_backward(softmax_pixelwise(logits), std::span<const ClassMap>(gt));
  auto f = [&] { return seg_loss_of_logits(logits, gt); };
  EXPECT_LE(gradcheck(f, logits.values(), grad.values()).max_rel_error, 1e-5);
}

TEST(SegLoss, ClassOutOfRangeThrows) {
  const std::vector<ClassMap> gt{ClassMap(1, 1, 4)};
  EXPECT_THROW(seg_loss(Tensor({1, 3, 1, 1}, 1.0 / 3), std::span<const ClassMap>(gt)), std::exception);
}

// ---------------------------------------------------------------- label loss

TEST(LabelLoss, TwoClassSpotValue) {
  const std::vector<double> s{logit(0.8), logit(0.3)};
  const std::vector<std::uint8_t> p{1, 0};
  const double loss = label_loss(s, p);
  EXPECT_NEAR(loss, -(std::log(0.8) + std::log(0.7)) / 2.0, 1e-12);
  EXPECT_NEAR(loss, 0.28990, 1e-4);
}

TEST(LabelLoss, PerfectPredictionLimitIsZero) {
  const double sat = logit(1.0 - 1e-12);
  const std::vector<double> s{sat, -sat};
  const std::vector<std::uint8_t> p{1, 0};
  EXPECT_NEAR(label_loss(s, p), 0.0, 1e-11);
}

TEST(LabelLoss, FiniteDifferences) {
  Rng rng(4);
  std::vector<double> s(6);
  for (auto& v : s) v = rng.uniform(-3, 3);
  const std::vector<std::uint8_t> p{1, 0, 0, 1, 1, 0};
  const auto g = label_loss_backward(s, p);
  auto f = [&] { return label_loss(s, p); };
  EXPECT_LE(gradcheck(f, s, g).max_rel_error, 1e-5);
}

TEST(LabelLoss, StableForLargeScores) {
  const std::vector<double> s{800.0, -800.0};
  const std::vector<std::uint8_t> p{0, 1};
  const double loss = label_loss(s, p);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, 800.0, 1e-9);
}

TEST(LabelLoss, BatchIsMeanOfItems) {
  Rng rng(5);
  const auto scores = oracle::random_matrix(3, 4, rng, -2, 2);
  const std::vector<std::vector<std::uint8_t>> pres{{1, 0, 0, 1}, {0, 0, 0, 0}, {1, 1, 1, 0}};
  double mean = 0.0;
  for (std::size_t b = 0; b < 3; ++b)
    mean += label_loss(std::span<const double>(scores.values().subspan(b * 4, 4)), pres[b]) / 3.0;
  EXPECT_NEAR(label_loss_batch(scores, pres), mean, 1e-14);
}

TEST(CombinedLoss, WeightedSum) {
  EXPECT_EQ(combined_loss(1.3, 0.4, 0.0).combined, 1.3);
  EXPECT_NEAR(combined_loss(1.0, 0.29, 1.0).combined, 1.29, 1e-15);
  EXPECT_THROW(combined_loss(1.0, 0.29, -0.5), std::invalid_argument);
}

TEST(CombinedLoss, GradientIsWeightedSumOfComponents) {
  Rng rng(6);
  const double lambda = 0.7;
  auto logits = oracle::random_tensor({1, 3, 2, 3}, rng, -2, 2);
  const std::vector<ClassMap> gt{oracle::random_map(2, 3, 3, rng)};
  std::vector<double> s{0.3, -1.2};
  const std::vector<std::uint8_t> pres{1, 0};
  std::vector<double> params(logits.values().begin(), logits.values().end());
  params.insert(params.end(), s.begin(), s.end());
  auto f = [&] {
    std::copy_n(params.begin(), logits.size(), logits.values().begin());
    std::copy(params.begin() + static_cast<std::ptrdiff_t>(logits.size()), params.end(), s.begin());
    return combined_loss(seg_loss_of_logits(logits, gt), label_loss(s, pres), lambda).combined;
  };
  const auto gseg = seg_loss_backward(softmax_pixelwise(logits), std::span<const ClassMap>(gt));
  std::vector<double> analytic(gseg.values().begin(), gseg.values().end());
  for (double g : label_loss_backward(s, pres)) analytic.push_back(lambda * g);
  EXPECT_LE(gradcheck(f, params, analytic).max_rel_error, 1e-5);
}

// ---------------------------------------------------------------- labels from mask

TEST(LabelsFromMask, AllBackgroundIsEmpty) {
  EXPECT_EQ(labels_from_mask(ClassMap(4, 4, 0), 6), std::vector<std::uint8_t>(6, 0));
}

TEST(LabelsFromMask, PresentClassesOnly) {
  ClassMap g(3, 3, 0);
  g(0, 0) = 2;
  g(2, 2) = 5;
  g(1, 1) = ClassMap::kIgnore;
  const auto l = labels_from_mask(g, 6);
  EXPECT_EQ(std::accumulate(l.begin(), l.end(), 0), 2);
  EXPECT_EQ(l[1], 1);
  EXPECT_EQ(l[4], 1);
}

TEST(LabelsFromMask, CountsAreNotEncoded) {
  ClassMap one(4, 4, 0), many(4, 4, 0);
  one(0, 0) = 2;
  many(0, 0) = 2;
  many(3, 3) = 2;
  many(3, 2) = 2;
  EXPECT_EQ(labels_from_mask(one, 3), labels_from_mask(many, 3));
}

// ---------------------------------------------------------------- spp

TEST(Spp, LevelOneIsGlobalMax) {
  Rng rng(7);
  const auto x = oracle::random_tensor({2, 3, 5, 6}, rng);
  const std::vector<std::size_t> levels{1};
  const auto r = spp_forward(x, levels);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      const auto p = x.plane(n, c);
      EXPECT_EQ(r.pooled(n, c), *std::max_element(p.begin(), p.end()));
    }
}

TEST(Spp, QuadrantsOfDistinctFourByFour) {
  Tensor x({1, 1, 4, 4});
  std::iota(x.values().begin(), x.values().end(), 0.0);
  const std::vector<std::size_t> levels{1, 2};
  const auto r = spp_forward(x, levels);
  ASSERT_EQ(r.pooled.cols(), 5u);
  const std::vector<double> expected{15, 5, 7, 13, 15};
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(r.pooled(0, k), expected[k]);
  EXPECT_EQ(oracle::spp(x, 0, levels), expected);
}

TEST(Spp, MatchesCellMaxOnRandomSizes) {
  Rng rng(8);
  const std::vector<std::size_t> levels{1, 2, 3, 4};
  for (int t = 0; t < 20; ++t) {
    const auto x = oracle::random_tensor({2, 2, 4 + rng.below(14), 4 + rng.below(14)}, rng);
    const auto r = spp_forward(x, levels);
    for (std::size_t n = 0; n < 2; ++n) {
      const auto ref = oracle::spp(x, n, levels);
      for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_EQ(r.pooled(n, k), ref[k]);
    }
  }
}

TEST(Spp, GridLargerThanMapThrows) {
  const std::vector<std::size_t> levels{1, 5};
  EXPECT_THROW(spp_forward(Tensor({1, 1, 4, 6}), levels), ShapeError);
}

TEST(Spp, FiniteDifferences) {
  Rng rng(9);
  auto x = oracle::random_tensor({1, 2, 6, 5}, rng);
  const std::vector<std::size_t> levels{1, 2, 3};
  const auto fwd = spp_forward(x, levels);
  const auto r = oracle::random_matrix(1, fwd.pooled.cols(), rng);
  const auto gx = spp_backward(fwd, r);
  auto f = [&] {
    const auto p = spp_forward(x, levels).pooled;
    return std::inner_product(p.values().begin(), p.values().end(), r.values().begin(), 0.0);
  };
  EXPECT_LE(gradcheck(f, x.values(), gx.values()).max_rel_error, 1e-5);
}

// ---------------------------------------------------------------- heads

TEST(LabelHeadShape, OneScorePerClass) {
  LabelHead<double> head(8, 16, 6);
  Rng rng(10);
  head.init(rng);
  const auto t = head.forward(oracle::random_tensor({3, 8, 5, 5}, rng));
  EXPECT_EQ(t.scores.rows(), 3u);
  EXPECT_EQ(t.scores.cols(), 6u);
}

TEST(RefineHeadShape, OutputMapCropsToRequestedExtent) {
  const std::vector<std::size_t> levels{1, 2};
  RefineHead<double> head(RefineKind::kSpp, 4, 3, 8, 8, levels);
  Rng rng(11);
  head.init(rng);
  const auto t = head.forward(oracle::random_tensor({2, 4, 6, 7}, rng));
  const auto m = head.output_map(t, 6, 7);
  EXPECT_EQ(m.shape(), (Shape4{2, 3, 6, 7}));
}

TEST(RefineKindNames, RoundTrip) {
  EXPECT_EQ(parse_refine_kind(to_string(RefineKind::kPlain)), RefineKind::kPlain);
  EXPECT_THROW(parse_refine_kind("dense"), std::invalid_argument);
}

// ---------------------------------------------------------------- properties

TEST(HeadsProperty, SegLossNonNegativeAndZeroOnlyWhenCertain) {
  Rng rng(12);
  for (int t = 0; t < 30; ++t) {
    const auto p = softmax_pixelwise(oracle::random_tensor({1, 4, 3, 3}, rng, -4, 4));
    const std::vector<ClassMap> gt{oracle::random_map(3, 3, 4, rng)};
    const double l = seg_loss(p, std::span<const ClassMap>(gt));
    EXPECT_GT(l, 0.0);
  }
}

TEST(HeadsProperty, LabelLossInvariantUnderJointPermutation) {
  Rng rng(13);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> s(7);
    std::vector<std::uint8_t> p(7);
    for (std::size_t i = 0; i < 7; ++i) {
      s[i] = rng.uniform(-4, 4);
      p[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    std::vector<double> sp(7);
    std::vector<std::uint8_t> pp(7);
    for (std::size_t i = 0; i < 7; ++i) {
      sp[i] = s[perm[i]];
      pp[i] = p[perm[i]];
    }
    EXPECT_NEAR(label_loss(s, p), label_loss(sp, pp), 1e-14);
  }
}

TEST(HeadsProperty, SppLengthIndependentOfSpatialSize) {
  Rng rng(14);
  const std::vector<std::size_t> levels{1, 2, 3, 4, 5};
  const std::size_t expected = spp_length(3, levels);
  EXPECT_EQ(expected, 3u * (1 + 4 + 9 + 16 + 25));
  EXPECT_EQ(spp_forward(Tensor({1, 3, 16, 16}), levels).pooled.cols(), expected);
  EXPECT_EQ(spp_forward(Tensor({1, 3, 13, 17}), levels).pooled.cols(), expected);
  for (int t = 0; t < 20; ++t) {
    const auto x = oracle::random_tensor({1, 3, 5 + rng.below(30), 5 + rng.below(30)}, rng);
    EXPECT_EQ(spp_forward(x, levels).pooled.cols(), expected);
  }
}

TEST(HeadsProperty, LabelsIdempotentUnderComponentDuplication) {
  Rng rng(15);
  for (int t = 0; t < 20; ++t) {
    ClassMap g(12, 12, 0);
    const auto cls = static_cast<std::uint8_t>(1 + rng.below(6));
    for (std::size_t i = 1; i < 4; ++i)
      for (std::size_t j = 1; j < 4; ++j) g(i, j) = cls;
    ClassMap dup = g;
    const std::size_t oi = 5 + rng.below(4), oj = 5 + rng.below(4);
    for (std::size_t i = 1; i < 4; ++i)
      for (std::size_t j = 1; j < 4; ++j) dup(oi + i - 1, oj + j - 1) = cls;
    EXPECT_EQ(labels_from_mask(g, 6), labels_from_mask(dup, 6));
  }
}
