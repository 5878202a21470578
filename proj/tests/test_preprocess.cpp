#include <gtest/gtest.h>

#include <random>

#include "heatdisagg/preprocess.hpp"

using namespace heatdisagg;

TEST(ComputeScaling, TwoPoints) {
  const std::vector<double> c{10, 14};
  const auto s = compute_scaling(c);
  EXPECT_DOUBLE_EQ(s.c_mean, 12.0);
  EXPECT_NEAR(s.c_std, 2.8284271247461903, 1e-12);
  EXPECT_DOUBLE_EQ(s.t_scale, 30.0);
}

TEST(ComputeScaling, OneToFive) {
  const std::vector<double> c{1, 2, 3, 4, 5};
  const auto s = compute_scaling(c);
  EXPECT_DOUBLE_EQ(s.c_mean, 3.0);
  EXPECT_NEAR(s.c_std, std::sqrt(2.5), 1e-12);
}

TEST(ComputeScaling, ConstantIsDegenerate) {
  const std::vector<double> c{5, 5, 5};
  try {
    compute_scaling(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateSample);
  }
}

TEST(ComputeScaling, UsesCompleteDaysOnly) {
  HouseholdSeries h;
  h.days.push_back({Date{}, 10.0, 0.0, true});
  h.days.push_back({Date{} + std::chrono::days{1}, 14.0, 0.0, true});
  h.days.push_back({Date{} + std::chrono::days{2}, 1.0, 0.0, false});
  EXPECT_DOUBLE_EQ(compute_scaling(h).c_mean, 12.0);
  EXPECT_EQ(scaled_observations(h, compute_scaling(h)).size(), 2u);
}

TEST(ApplyScaling, Examples) {
  const ScalingParams s{12.0, 2.0, 30.0};
  EXPECT_DOUBLE_EQ(apply_scaling(0.0, 30.0, s).t, 1.0);
  EXPECT_DOUBLE_EQ(apply_scaling(12.0, 0.0, s).c, 0.0);
  const auto o = apply_scaling(15.0, -3.0, s);
  EXPECT_DOUBLE_EQ(o.c, 1.5);
  EXPECT_DOUBLE_EQ(o.t, -0.1);
}

TEST(InvertScaling, Examples) {
  const ScalingParams s{12.0, 2.0, 30.0};
  EXPECT_DOUBLE_EQ(invert_scaling(0.5, s, ScaleKind::ConsumptionDelta), 1.0);
  EXPECT_DOUBLE_EQ(invert_scaling(0.5, s, ScaleKind::Temperature), 15.0);
  EXPECT_DOUBLE_EQ(invert_variance(0.25, s), 1.0);
  EXPECT_DOUBLE_EQ(slope_to_physical(-3.0, s), -0.2);
}

TEST(InvertScaling, RoundTripAllKinds) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50, 50), pos(0.1, 20);
  for (int i = 0; i < 1000; ++i) {
    const ScalingParams s{u(rng), pos(rng), 30.0};
    const double c = u(rng), t = u(rng);
    const auto o = apply_scaling(c, t, s);
    EXPECT_NEAR(invert_scaling(o.c, s, ScaleKind::Consumption), c, 1e-12 * std::max(1.0, std::abs(c)) * 10);
    EXPECT_NEAR(invert_scaling(o.t, s, ScaleKind::Temperature), t, 1e-12 * std::max(1.0, std::abs(t)));
    const double delta = u(rng);
    EXPECT_NEAR(invert_scaling(delta / s.c_std, s, ScaleKind::ConsumptionDelta), delta,
                1e-12 * std::max(1.0, std::abs(delta)));
  }
}

TEST(Scaling, StandardisedSampleHasZeroMeanUnitStd) {
  std::mt19937_64 rng(9);
  std::gamma_distribution<double> g(3.0, 4.0);
  HouseholdSeries h;
  for (int i = 0; i < 400; ++i) h.days.push_back({Date{} + std::chrono::days{i}, g(rng), 5.0, true});
  const auto obs = scaled_observations(h, compute_scaling(h));
  double mean = 0.0;
  for (const auto& o : obs) mean += o.c;
  mean /= static_cast<double>(obs.size());
  double ss = 0.0;
  for (const auto& o : obs) ss += (o.c - mean) * (o.c - mean);
  EXPECT_NEAR(mean, 0.0, 1e-9);
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(obs.size() - 1)), 1.0, 1e-9);
}
