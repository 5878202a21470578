#include <gtest/gtest.h>

#include <boost/math/special_functions/gamma.hpp>
#include <random>

#include "heatdisagg/adam.hpp"
#include "heatdisagg/infer.hpp"

using namespace heatdisagg;

namespace {

std::vector<ScaledObservation> line_data(double slope, double intercept, int n, double t_lo, double t_hi) {
  std::vector<ScaledObservation> obs;
  for (int i = 0; i < n; ++i) {
    const double t = t_lo + (t_hi - t_lo) * i / (n - 1);
    obs.push_back({slope * t + intercept, t});
  }
  return obs;
}

SyntheticHousehold reference_household(std::uint64_t seed, int n_days = 365) {
  const auto truth = make_params({0.5}, 0.0, 0.0, {-2.0, -0.5}, {0.6, 0.4}, {0.1, 0.1}, 0.1);
  return simulate(truth, n_days, TemperatureProfile{}, seed);
}

}  // namespace

TEST(Dual, ChainRuleMatchesFiniteDifferences) {
  auto f = [](auto x) {
    using std::exp, std::log;
    return exp(x) * log(x) + lgamma_fn(x) / x + softplus(x - 2.0) * sigmoid(x);
  };
  for (double x0 : {0.3, 1.0, 2.5, 7.0}) {
    const Dual x = Dual::variable(x0, 0, 1);
    const double fd = (f(x0 + 1e-6) - f(x0 - 1e-6)) / 2e-6;
    EXPECT_NEAR(f(x).derivative(0), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    EXPECT_DOUBLE_EQ(f(x).value(), f(x0));
  }
}

TEST(Adam, ClimbsConcaveQuadratic) {
  std::vector<double> x{0.0, 10.0};
  Adam adam(2, {0.1, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 3000; ++i) {
    const std::vector<double> g{-2.0 * (x[0] - 3.0), -2.0 * (x[1] + 1.0)};
    adam.ascend(x, g);
  }
  EXPECT_NEAR(x[0], 3.0, 1e-3);
  EXPECT_NEAR(x[1], -1.0, 1e-3);
  EXPECT_EQ(adam.steps(), 3000u);
}

TEST(Adam, FirstStepHasLearningRateMagnitude) {
  std::vector<double> x{0.0};
  Adam adam(1, {0.05, 0.9, 0.999, 1e-8});
  adam.ascend(x, std::vector<double>{123.0});
  EXPECT_NEAR(x[0], 0.05, 1e-9);
}

TEST(GammaInversion, InvertsRegularisedGamma) {
  for (double a : {0.3, 1.0, 2.0, 8.0, 40.0})
    for (double u : {1e-6, 0.1, 0.5, 0.9, 0.999999}) {
      const double x = gamma_by_inversion(a, u);
      EXPECT_NEAR(boost::math::gamma_p(a, x), u, 1e-10);
    }
}

TEST(GammaInversion, DerivativeMatchesImplicitFunction) {
  // dx/da = -(dP/da) / (dP/dx) at fixed u.
  for (double a : {0.5, 2.0, 8.0})
    for (double u : {0.2, 0.5, 0.8}) {
      const double x = gamma_by_inversion(a, u);
      const double h = 1e-6;
      const double dp_da = (boost::math::gamma_p(a + h, x) - boost::math::gamma_p(a - h, x)) / (2 * h);
      const double dp_dx = boost::math::gamma_p_derivative(a, x);
      const Dual d = gamma_by_inversion(Dual::variable(a, 0, 1), u);
      EXPECT_NEAR(d.derivative(0), -dp_da / dp_dx, 1e-5 * std::max(1.0, std::abs(dp_da / dp_dx)));
    }
}

TEST(GuideLayout, PackUnpackRoundTrip) {
  const auto sim = reference_household(1);
  const auto g = init_guide(ModelPriors{}, sim.scaled);
  const auto theta = pack(g);
  EXPECT_EQ(theta.size(), layout_of(g).size());
  const auto back = unpack(theta, g);
  EXPECT_EQ(pack(back), theta);
  EXPECT_EQ(layout_of(g).normal_indices().size(), 2 * g.K() + 4 + 2 * g.M());
}

TEST(ElboGradient, MatchesCentralFiniteDifferences) {
  // Observations kept away from every threshold draw so the likelihood is
  // smooth in the threshold at this noise.
  const auto sim = reference_household(2, 60);
  std::vector<ScaledObservation> obs;
  for (const auto& o : sim.scaled)
    if (std::abs(o.t - 0.5) > 0.15 && obs.size() < 20) obs.push_back(o);
  ASSERT_EQ(obs.size(), 20u);
  auto pad = sim.scaled;
  const auto guide = init_guide(ModelPriors{}, pad);
  auto g = guide;
  g.threshold_logits.scale.assign(g.K(), 1e-3);
  const auto theta = pack(g);
  const GuideLayout L = layout_of(g);
  const ModelPriors priors;
  const std::uint64_t seed = 17;
  std::mt19937_64 rng(seed);
  const auto eg = elbo_with_gradient(theta, L, g.support, priors, obs, 4, rng);
  EXPECT_NEAR(eg.value, elbo_value(theta, L, g.support, priors, obs, 4, seed), 1e-9);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto tp = theta, tm = theta;
    tp[i] += 1e-5;
    tm[i] -= 1e-5;
    const double fd = (elbo_value(tp, L, g.support, priors, obs, 4, seed) -
                       elbo_value(tm, L, g.support, priors, obs, 4, seed)) / 2e-5;
    EXPECT_NEAR(eg.gradient[i], fd, 1e-3 * std::max(1.0, std::abs(fd))) << "index " << i;
  }
}

TEST(NormalElbo, ConjugateModelMatchesClosedForm) {
  // x ~ N(0, 1), y_i | x ~ N(x, 1), q(x) = N(m, s^2).
  const std::vector<double> y{0.4, -1.2, 2.0, 0.7, 1.1};
  const double m = 0.5, s = 0.4;
  double closed = -0.5 * (m * m + s * s) - kLogSqrt2Pi;
  for (double v : y) closed += -0.5 * ((v - m) * (v - m) + s * s) - kLogSqrt2Pi;
  closed += std::log(s) + 0.5 + kLogSqrt2Pi;
  auto log_joint = [&](std::span<const double> z) {
    double lp = -0.5 * z[0] * z[0] - kLogSqrt2Pi;
    for (double v : y) lp += -0.5 * (v - z[0]) * (v - z[0]) - kLogSqrt2Pi;
    return lp;
  };
  const std::vector<double> loc{m}, scale{s};
  const auto est = estimate_normal_elbo(log_joint, loc, scale, 20000, 3);
  EXPECT_LE(std::abs(est.mean - closed), 3.0 * est.std_error);
}

TEST(NormalElbo, ExactPosteriorHasZeroVariance) {
  // With q equal to the posterior, log p(x, y) - log q(x) is constant.
  const std::vector<double> y{1.0, 2.0, 3.0};
  const double post_var = 1.0 / 4.0, post_mean = 6.0 / 4.0;
  auto log_joint = [&](std::span<const double> z) {
    double lp = -0.5 * z[0] * z[0] - kLogSqrt2Pi;
    for (double v : y) lp += -0.5 * (v - z[0]) * (v - z[0]) - kLogSqrt2Pi;
    return lp;
  };
  const std::vector<double> loc{post_mean}, scale{std::sqrt(post_var)};
  const auto est = estimate_normal_elbo(log_joint, loc, scale, 200, 5);
  EXPECT_LT(est.std_error, 1e-10);
}

TEST(InitGuide, RejectsTooFewObservations) {
  const auto obs = line_data(-1.0, 0.0, 29, 0.0, 1.0);
  try {
    init_guide(ModelPriors{}, obs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewObservations);
  }
  EXPECT_NO_THROW(init_guide(ModelPriors{}, line_data(-1.0, 0.0, 30, 0.0, 1.0)));
}

TEST(InitGuide, WarmLineExactAndThresholdInsideData) {
  const auto obs = line_data(0.3, 1.2, 100, -0.1, 0.9);
  const auto g = init_guide(ModelPriors{}, obs);
  EXPECT_NEAR(g.w_R.loc[0], 0.3, 1e-9);
  EXPECT_NEAR(g.b.loc[0], 1.2, 1e-9);
  const std::vector<double> y(g.threshold_logits.loc);
  const auto thr = tau_ordered<double>(stick_breaking<double>(y).simplex, g.support.threshold);
  EXPECT_GE(thr.back(), -0.1);
  EXPECT_LE(thr.back(), 0.9);
  EXPECT_GT(g.support.threshold.high, 0.9);
  EXPECT_LT(g.support.threshold.low, -0.1);
}

TEST(InitGuide, SlopesStrictlyInsideSupportAndOrdered) {
  const auto sim = reference_household(4);
  const auto g = init_guide(ModelPriors{}, sim.scaled);
  const std::vector<double> y(g.weight_logits.loc);
  const auto w = tau_ordered<double>(stick_breaking<double>(y).simplex, g.support.slope);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_LT(w[0], w[1]);
  EXPECT_GT(w[0], g.support.slope.low);
  EXPECT_LT(w[1], g.support.slope.high);
}

TEST(Percentile, LinearInterpolation) {
  const std::vector<double> v{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(detail::percentile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(detail::percentile(v, 0.4), 2.6);
  EXPECT_DOUBLE_EQ(detail::percentile(v, 1.0), 5.0);
}

TEST(PosteriorSummary, DirichletMeanFromConcentration) {
  const auto sim = reference_household(5);
  auto g = init_guide(ModelPriors{}, sim.scaled);
  g.omega_concentration = {8.0, 2.0};
  const auto s = posterior_summary(g, 20000, 1);
  EXPECT_NEAR(s.omega[0].mean, 0.8, 0.005);
  EXPECT_NEAR(s.omega[1].mean, 0.2, 0.005);
  // Beta(8, 2) standard deviation.
  EXPECT_NEAR(s.omega[0].std, std::sqrt(8.0 * 2.0 / (100.0 * 11.0)), 0.005);
}

TEST(PosteriorSummary, DegenerateScalesGiveDeterministicParameters) {
  const auto sim = reference_household(6);
  auto g = init_guide(ModelPriors{}, sim.scaled);
  g.threshold_logits.scale.assign(g.K(), 1e-12);
  g.weight_logits.scale.assign(g.M(), 1e-12);
  g.b.scale = {1e-12};
  g.w_R.scale = {1e-12};
  const auto s = posterior_summary(g, 100, 2);
  const std::vector<double> ty(g.threshold_logits.loc), wy(g.weight_logits.loc);
  const auto thr = tau_ordered<double>(stick_breaking<double>(ty).simplex, g.support.threshold);
  const auto w = tau_ordered<double>(stick_breaking<double>(wy).simplex, g.support.slope);
  EXPECT_NEAR(s.thresholds[0].mean, thr[0], 1e-9);
  EXPECT_LT(s.thresholds[0].std, 1e-9);
  EXPECT_NEAR(s.w_left[1].mean, w[1], 1e-9);
  EXPECT_NEAR(s.b.mean, g.b.loc[0], 1e-9);
  const auto b_left = derive_biases(g.w_R.loc[0], g.b.loc[0], w, thr[0]);
  EXPECT_NEAR(s.b_left[0].mean, b_left[0], 1e-8);
}

TEST(PosteriorSummary, SeedStable) {
  const auto sim = reference_household(7);
  const auto g = init_guide(ModelPriors{}, sim.scaled);
  const auto a = posterior_summary(g, 500, 9), b = posterior_summary(g, 500, 9);
  EXPECT_EQ(a.thresholds[0].mean, b.thresholds[0].mean);
  EXPECT_EQ(a.w_left[0].std, b.w_left[0].std);
}

TEST(ToPhysical, Units) {
  PosteriorSummary s;
  s.thresholds = {{0.5, 0.1}};
  s.b = {1.0, 0.2};
  s.w_R = {-0.3, 0.03};
  s.w_left = {{-3.0, 0.3}, {-1.5, 0.15}};
  s.b_left = {{2.0, 0.1}, {1.0, 0.1}};
  s.omega = {{0.5, 0.1}, {0.5, 0.1}};
  s.sigma_left = {0.1, 0.2};
  s.sigma_R = 0.5;
  const ScalingParams sc{20.0, 4.0, 30.0};
  const auto p = to_physical(s, sc);
  EXPECT_DOUBLE_EQ(p.thresholds[0].mean, 15.0);
  EXPECT_DOUBLE_EQ(p.thresholds[0].std, 3.0);
  EXPECT_DOUBLE_EQ(p.b.mean, 24.0);
  EXPECT_DOUBLE_EQ(p.b.std, 0.8);
  EXPECT_DOUBLE_EQ(p.w_left[0].mean, -0.4);
  EXPECT_DOUBLE_EQ(p.sigma_R, 2.0);
  EXPECT_DOUBLE_EQ(p.omega[0].mean, 0.5);
}

TEST(LabelComponents, HighestLineAtColdestIsHome) {
  const auto p = make_params({0.5}, 0.0, 0.0, {-2.0, -0.5}, {0.5, 0.5}, {0.1, 0.1}, 0.1);
  auto labels = label_components(p, -0.1);
  EXPECT_EQ(labels[0], StateLabel::Home);
  EXPECT_EQ(labels[1], StateLabel::Away);
  const auto q = make_params({0.5}, 0.0, 0.0, {-1.0, -1.0}, {0.5, 0.5}, {0.1, 0.1}, 0.1);
  labels = label_components(q, -0.1);
  EXPECT_EQ(labels[0], StateLabel::Home);
}

TEST(ElboConverged, WindowedRelativeChange) {
  std::vector<double> flat(400, -100.0);
  EXPECT_TRUE(elbo_converged(flat, 200, 1e-4));
  EXPECT_FALSE(elbo_converged(std::span<const double>(flat).first(399), 200, 1e-4));
  std::vector<double> rising(400);
  for (int i = 0; i < 400; ++i) rising[i] = -100.0 + (i >= 200 ? 1.0 : 0.0);
  EXPECT_FALSE(elbo_converged(rising, 200, 1e-4));
  EXPECT_TRUE(elbo_converged(rising, 200, 1e-2));
}

TEST(Fit, DeterministicForSeed) {
  const auto sim = reference_household(8, 200);
  FitConfig cfg;
  cfg.n_steps = 150;
  cfg.summary_samples = 200;
  cfg.seed = 3;
  const auto s = compute_scaling(sim.series);
  const auto obs = scaled_observations(sim.series, s);
  const auto a = fit_scaled(obs, s, ModelPriors{}, cfg);
  const auto b = fit_scaled(obs, s, ModelPriors{}, cfg);
  EXPECT_EQ(a.elbo_trace, b.elbo_trace);
  EXPECT_EQ(pack(a.guide), pack(b.guide));
  EXPECT_EQ(a.summary.w_left[0].mean, b.summary.w_left[0].mean);
}

TEST(Fit, ElboRisesAndRecoversStructure) {
  const auto sim = reference_household(9);
  FitConfig cfg;
  cfg.n_steps = 2000;
  cfg.summary_samples = 2000;
  const auto r = fit(sim.series, ModelPriors{}, cfg);
  ASSERT_EQ(r.elbo_trace.size(), 2000u);
  const auto mean_of = [&](std::size_t from) {
    return std::accumulate(r.elbo_trace.begin() + from, r.elbo_trace.begin() + from + 200, 0.0) / 200.0;
  };
  EXPECT_GE(mean_of(1800), mean_of(0));
  // Truth: T_c = 15 degC, steepest physical slope = -2 * 5 / 30.
  EXPECT_NEAR(r.summary_physical.t_c().mean, 15.0, 1.5);
  EXPECT_NEAR(r.summary_physical.w_left[0].mean / (-2.0 * 5.0 / 30.0), 1.0, 0.15);
  EXPECT_EQ(r.state_labels[0], StateLabel::Home);
  EXPECT_EQ(r.n_observations, 365u);
}

TEST(Fit, TooFewCompleteDays) {
  auto sim = reference_household(10, 40);
  for (std::size_t i = 0; i < 15; ++i) sim.series.days[i].complete = false;
  try {
    fit(sim.series, ModelPriors{}, FitConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewObservations);
  }
}
