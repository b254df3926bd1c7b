// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "gdn/optim.hpp"
#include "gdn/param.hpp"
#include "oracles.hpp"

using namespace gdn;

namespace {

struct Toy {
  Parameter<double> a{Shape4{1, 1, 1, 3}};
  Parameter<double> b{Shape4{1, 1, 2, 2}};
  ParamList<double> list() { return {a.ref("toy.a", "head"), b.ref("toy.b", "body")}; }
};

}  // namespace

TEST(Sgd, VanillaStepWithoutMomentumOrDecay) {
  Toy t;
  t.a.value = Tensor({1, 1, 1, 3}, std::vector<double>{1, 2, 3});
  t.a.grad = Tensor({1, 1, 1, 3}, std::vector<double>{0.5, -1, 2});
  Sgd<double> sgd({0.1, 0.0, 0.0});
  sgd.step(t.list(), GroupPlan::all({"head", "body"}));
  EXPECT_EQ(t.a.value.values()[0], 1 - 0.1 * 0.5);
  EXPECT_EQ(t.a.value.values()[1], 2 - 0.1 * -1);
  EXPECT_EQ(t.a.value.values()[2], 3 - 0.1 * 2);
}

TEST(Sgd, ZeroGradientVelocityDecaysByMomentum) {
  Toy t;
  t.a.value.fill(1.0);
  t.a.grad.fill(1.0);
  Sgd<double> sgd({0.1, 0.9, 0.0});
  const auto plan = GroupPlan::all({"head", "body"});
  sgd.step(t.list(), plan);
  const double v1 = sgd.velocity("toy.a")[0];
  t.a.grad.fill(0.0);
  const auto theta = t.a.value;
  sgd.step(t.list(), plan);
  EXPECT_DOUBLE_EQ(sgd.velocity("toy.a")[0], 0.9 * v1);
  sgd.step(t.list(), plan);
  EXPECT_DOUBLE_EQ(sgd.velocity("toy.a")[0], 0.81 * v1);
  EXPECT_NE(t.a.value, theta);  // a decaying velocity still moves theta
}

TEST(Sgd, QuadraticBowlConverges) {
  Parameter<double> p(Shape4{1, 1, 1, 1});
  p.value.fill(1.0);
  Sgd<double> sgd({0.1, 0.9, 0.0});
  oracle::ScalarSgd ref{1.0, 0.0, 0.1, 0.9, 0.0};
  const auto plan = GroupPlan::all({"g"});
  int steps = 0;
  for (; steps < 200 && std::abs(p.value.values()[0]) >= 1e-3; ++steps) {
    p.grad.values()[0] = 2.0 * p.value.values()[0];
    ref.step(2.0 * ref.theta);
    sgd.step({p.ref("theta", "g")}, plan);
    EXPECT_EQ(p.value.values()[0], ref.theta);
  }
  EXPECT_LT(std::abs(p.value.values()[0]), 1e-3);
  EXPECT_LT(steps, 200);
}

TEST(Sgd, WeightDecayMatchesScalarReference) {
  Parameter<double> p(Shape4{1, 1, 1, 1});
  p.value.fill(-0.7);
  Sgd<double> sgd({0.05, 0.8, 5e-4});
  oracle::ScalarSgd ref{-0.7, 0.0, 0.05, 0.8, 5e-4};
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const double g = rng.uniform(-1, 1);
    p.grad.values()[0] = g;
    ref.step(g);
    sgd.step({p.ref("w", "g")}, GroupPlan::all({"g"}));
    EXPECT_EQ(p.value.values()[0], ref.theta);
  }
}

TEST(Sgd, FrozenGroupsUntouchedAndMultipliersApplied) {
  Toy t;
  t.a.value.fill(1.0);
  t.b.value.fill(1.0);
  t.a.grad.fill(1.0);
  t.b.grad.fill(1.0);
  Sgd<double> sgd({0.1, 0.0, 0.0});
  GroupPlan plan;
  plan.lr_multiplier["head"] = 0.1;
  const auto rates = sgd.step(t.list(), plan);
  EXPECT_EQ(t.b.value, Tensor(t.b.value.shape(), 1.0));
  EXPECT_NEAR(t.a.value.values()[0], 1.0 - 0.01, 1e-15);
  ASSERT_EQ(rates.size(), 1u);
  EXPECT_EQ(rates[0].group, "head");
  EXPECT_NEAR(rates[0].lr, 0.01, 1e-15);
}

TEST(Sgd, UnknownGroupInPlanThrows) {
  Toy t;
  Sgd<double> sgd;
  EXPECT_THROW(sgd.step(t.list(), GroupPlan::all({"head", "nope"})), std::invalid_argument);
}

TEST(Sgd, NonPositiveLearningRateRejected) {
  Sgd<double> sgd;
  EXPECT_THROW(sgd.set_lr(0.0), std::invalid_argument);
}

TEST(Plateau, ImprovingStreamNeverReduces) {
  PlateauSchedule s(3, 0.1, 1e-4);
  double lr = 0.01;
  for (int i = 0; i < 20; ++i) EXPECT_FALSE(s.update(0.1 + 0.01 * i, lr));
  EXPECT_EQ(lr, 0.01);
}

TEST(Plateau, FlatStreamOfPatiencePlusOneReducesOnce) {
  PlateauSchedule s(3, 0.1, 1e-4);
  double lr = 1.0;
  int reductions = 0;
  for (int i = 0; i < 4; ++i) reductions += s.update(0.5, lr) ? 1 : 0;
  EXPECT_EQ(reductions, 1);
  EXPECT_NEAR(lr, 0.1, 1e-15);
}

TEST(Plateau, ReducesAfterFourthFlatReading) {
  PlateauSchedule s(3, 0.1, 1e-4);
  double lr = 1.0;
  const std::vector<double> stream{0.50, 0.51, 0.51, 0.51, 0.51};
  std::vector<bool> fired;
  for (double m : stream) fired.push_back(s.update(m, lr));
  EXPECT_EQ(fired, (std::vector<bool>{false, false, false, false, true}));
}

TEST(Plateau, SubThresholdGainsCountAsFlat) {
  PlateauSchedule s(2, 0.5, 1e-4);
  double lr = 1.0;
  EXPECT_FALSE(s.update(0.5, lr));
  EXPECT_FALSE(s.update(0.50005, lr));
  EXPECT_TRUE(s.update(0.50009, lr));
  EXPECT_EQ(lr, 0.5);
}

TEST(Plateau, NonFiniteMetricThrows) {
  PlateauSchedule s;
  double lr = 1.0;
  EXPECT_THROW(s.update(std::nan(""), lr), std::invalid_argument);
}

TEST(Gradcheck, LinearFunctionIsExactToRounding) {
  std::vector<double> x{0.3, -1.1, 2.0};
  const std::vector<double> c{1.5, -2.0, 0.25};
  auto f = [&] { return c[0] * x[0] + c[1] * x[1] + c[2] * x[2]; };
  const auto r = gradcheck(f, x, c);
  EXPECT_LE(r.max_rel_error, 1e-9);
  EXPECT_EQ(r.checked, 3u);
  EXPECT_EQ(x, (std::vector<double>{0.3, -1.1, 2.0}));
}

TEST(Gradcheck, ScaledGradientIsDetected) {
  std::vector<double> x{0.4, 0.9};
  auto f = [&] { return x[0] * x[0] * x[1] + std::sin(x[1]); };
  const std::vector<double> g{2 * 0.4 * 0.9 * 1.01, (0.16 + std::cos(0.9)) * 1.01};
  EXPECT_GE(gradcheck(f, x, g).max_rel_error, 5e-3);
}

TEST(Gradcheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_NEAR(relative_error(1e-10, 0.0), 1e-2, 1e-15);
  EXPECT_NEAR(relative_error(2.0, 1.0), 0.5, 1e-15);
}

// ---------------------------------------------------------------- properties

TEST(OptimProperty, VanillaSgdBitComparableToScalarLoop) {
  Rng rng(2);
  Parameter<double> p(Shape4{1, 1, 4, 4});
  for (auto& v : p.value.values()) v = rng.uniform(-1, 1);
  std::vector<oracle::ScalarSgd> ref;
  for (double v : p.value.values()) ref.push_back({v, 0.0, 0.03, 0.0, 0.0});
  Sgd<double> sgd({0.03, 0.0, 0.0});
  for (int it = 0; it < 25; ++it) {
    for (std::size_t i = 0; i < 16; ++i) {
      const double g = rng.uniform(-1, 1);
      p.grad.values()[i] = g;
      ref[i].step(g);
    }
    sgd.step({p.ref("p", "g")}, GroupPlan::all({"g"}));
    for (std::size_t i = 0; i < 16; ++i) ASSERT_EQ(p.value.values()[i], ref[i].theta);
  }
}

TEST(OptimProperty, PlateauLearningRateNeverIncreases) {
  Rng rng(3);
  PlateauSchedule s(2, 0.5, 1e-4);
  double lr = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double before = lr;
    s.update(rng.uniform(), lr);
    EXPECT_LE(lr, before);
  }
}

TEST(OptimProperty, FrozenParametersBitIdenticalAcrossSteps) {
  Rng rng(4);
  Toy t;
  for (auto& v : t.b.value.values()) v = rng.uniform(-1, 1);
  const auto frozen = t.b.value;
  Sgd<double> sgd;
  GroupPlan plan;
  plan.lr_multiplier["head"] = 1.0;
  for (int i = 0; i < 100; ++i) {
    for (auto& v : t.a.grad.values()) v = rng.uniform(-1, 1);
    for (auto& v : t.b.grad.values()) v = rng.uniform(-1, 1);
    sgd.step(t.list(), plan);
  }
  EXPECT_EQ(t.b.value, frozen);
}
