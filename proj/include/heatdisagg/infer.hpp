#pragma once

// Stochastic variational inference for the piecewise mixture model.
//
// Guide family: independent Normals over the unconstrained coordinates of the
// thresholds (stick-breaking logits), b, w_R and the left slopes; a Dirichlet
// over the mixture weights; observation scales as point parameters in log
// space. Gradients are exact derivatives of the Monte Carlo ELBO for fixed
// noise (forward-mode duals); the Dirichlet draw is reparameterised through
// the inverse gamma CDF.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "heatdisagg/adam.hpp"
#include "heatdisagg/dual.hpp"
#include "heatdisagg/error.hpp"
#include "heatdisagg/ingest.hpp"
#include "heatdisagg/model.hpp"
#include "heatdisagg/preprocess.hpp"

namespace heatdisagg {

inline constexpr std::size_t kMinFitObservations = 30;

struct NormalFactor {
  std::vector<double> loc;
  std::vector<double> scale;
};

struct GuidePosterior {
  NormalFactor threshold_logits;  // K
  NormalFactor b;                 // 1
  NormalFactor w_R;               // 1
  NormalFactor weight_logits;     // M
  std::vector<double> omega_concentration;  // M
  std::vector<double> log_sigma_left;       // M
  double log_sigma_R = 0.0;
  ModelSupport support;

  std::size_t K() const { return threshold_logits.loc.size(); }
  std::size_t M() const { return omega_concentration.size(); }
};

struct FitConfig {
  int n_steps = 3000;
  int n_mc_samples = 8;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  int convergence_window = 200;
  double convergence_tol = 1e-4;
  int summary_samples = 10000;

  void validate() const {
    if (n_steps < 1) throw Error(ErrorCode::InvalidArgument, "n_steps must be >= 1");
    if (n_mc_samples < 1) throw Error(ErrorCode::InvalidArgument, "n_mc_samples must be >= 1");
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be positive");
    if (convergence_window < 1) throw Error(ErrorCode::InvalidArgument, "convergence_window must be >= 1");
    if (summary_samples < 2) throw Error(ErrorCode::InvalidArgument, "summary_samples must be >= 2");
  }
};

// ---------------------------------------------------------------------------
// Flat parameter layout
//
// [thr loc (K), thr log-scale (K), b loc, b log-scale, w_R loc, w_R log-scale,
//  slope loc (M), slope log-scale (M), log concentration (M), log sigma_left (M),
//  log sigma_R]

struct GuideLayout {
  std::size_t K = 1, M = 2;

  std::size_t thr_loc() const { return 0; }
  std::size_t thr_log_scale() const { return K; }
  std::size_t b_loc() const { return 2 * K; }
  std::size_t b_log_scale() const { return 2 * K + 1; }
  std::size_t w_R_loc() const { return 2 * K + 2; }
  std::size_t w_R_log_scale() const { return 2 * K + 3; }
  std::size_t slope_loc() const { return 2 * K + 4; }
  std::size_t slope_log_scale() const { return 2 * K + 4 + M; }
  std::size_t log_concentration() const { return 2 * K + 4 + 2 * M; }
  std::size_t log_sigma_left() const { return 2 * K + 4 + 3 * M; }
  std::size_t log_sigma_R() const { return 2 * K + 4 + 4 * M; }
  std::size_t size() const { return 2 * K + 5 + 4 * M; }

  /// Indices of Normal location / log-scale coordinates.
  std::vector<std::size_t> normal_indices() const {
    std::vector<std::size_t> idx(log_concentration());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
};

inline GuideLayout layout_of(const GuidePosterior& g) { return {g.K(), g.M()}; }

inline std::vector<double> pack(const GuidePosterior& g) {
  const GuideLayout L = layout_of(g);
  std::vector<double> theta(L.size());
  for (std::size_t k = 0; k < L.K; ++k) {
    theta[L.thr_loc() + k] = g.threshold_logits.loc[k];
    theta[L.thr_log_scale() + k] = std::log(g.threshold_logits.scale[k]);
  }
  theta[L.b_loc()] = g.b.loc[0];
  theta[L.b_log_scale()] = std::log(g.b.scale[0]);
  theta[L.w_R_loc()] = g.w_R.loc[0];
  theta[L.w_R_log_scale()] = std::log(g.w_R.scale[0]);
  for (std::size_t m = 0; m < L.M; ++m) {
    theta[L.slope_loc() + m] = g.weight_logits.loc[m];
    theta[L.slope_log_scale() + m] = std::log(g.weight_logits.scale[m]);
    theta[L.log_concentration() + m] = std::log(g.omega_concentration[m]);
    theta[L.log_sigma_left() + m] = g.log_sigma_left[m];
  }
  theta[L.log_sigma_R()] = g.log_sigma_R;
  return theta;
}

inline GuidePosterior unpack(std::span<const double> theta, const GuidePosterior& like) {
  const GuideLayout L = layout_of(like);
  GuidePosterior g = like;
  for (std::size_t k = 0; k < L.K; ++k) {
    g.threshold_logits.loc[k] = theta[L.thr_loc() + k];
    g.threshold_logits.scale[k] = std::exp(theta[L.thr_log_scale() + k]);
  }
  g.b.loc[0] = theta[L.b_loc()];
  g.b.scale[0] = std::exp(theta[L.b_log_scale()]);
  g.w_R.loc[0] = theta[L.w_R_loc()];
  g.w_R.scale[0] = std::exp(theta[L.w_R_log_scale()]);
  for (std::size_t m = 0; m < L.M; ++m) {
    g.weight_logits.loc[m] = theta[L.slope_loc() + m];
    g.weight_logits.scale[m] = std::exp(theta[L.slope_log_scale() + m]);
    g.omega_concentration[m] = std::exp(theta[L.log_concentration() + m]);
    g.log_sigma_left[m] = theta[L.log_sigma_left() + m];
  }
  g.log_sigma_R = theta[L.log_sigma_R()];
  return g;
}

// ---------------------------------------------------------------------------
// Noise and reparameterised draws

/// Standard-normal and uniform variates consumed by one ELBO sample.
struct GuideNoise {
  std::vector<double> thresholds;  // K
  double b = 0.0;
  double w_R = 0.0;
  std::vector<double> weights;     // M
  std::vector<double> gamma_u;     // M, in (0, 1)
};

inline GuideNoise draw_noise(std::mt19937_64& rng, const GuideLayout& L) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  GuideNoise n;
  n.thresholds.resize(L.K);
  for (auto& e : n.thresholds) e = normal(rng);
  n.b = normal(rng);
  n.w_R = normal(rng);
  n.weights.resize(L.M);
  for (auto& e : n.weights) e = normal(rng);
  n.gamma_u.resize(L.M);
  for (auto& u : n.gamma_u) u = std::clamp(uniform(rng), 1e-12, 1.0 - 1e-12);
  return n;
}

/// Gamma(alpha, 1) variate by inversion, differentiable in alpha.
inline double gamma_by_inversion(double alpha, double u) { return boost::math::gamma_p_inv(alpha, u); }

inline Dual gamma_by_inversion(const Dual& alpha, double u) {
  const double a = alpha.value();
  const double x = boost::math::gamma_p_inv(a, u);
  const double h = 1e-5 * a;
  const double slope =
      (boost::math::gamma_p_inv(a + h, u) - boost::math::gamma_p_inv(a - h, u)) / (2.0 * h);
  return alpha.apply(x, slope);
}

inline double likelihood_term(const BasicModelParams<double>& p, std::span<const ScaledObservation> obs) {
  return log_likelihood(p, obs);
}

/// Value from the double-precision likelihood, tangent by the chain rule
/// through its partial derivatives with respect to the line parameters.
inline Dual likelihood_term(const BasicModelParams<Dual>& p, std::span<const ScaledObservation> obs) {
  ModelParams v;
  auto values = [](const std::vector<Dual>& xs) {
    std::vector<double> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(x.value());
    return out;
  };
  v.thresholds = values(p.thresholds);
  v.b = p.b.value();
  v.w_R = p.w_R.value();
  v.w_left = values(p.w_left);
  v.b_left = values(p.b_left);
  v.omega = values(p.omega);
  v.sigma_left = values(p.sigma_left);
  v.sigma_R = p.sigma_R.value();

  LikelihoodGradient g;
  Dual result(log_likelihood(v, obs, &g));
  for (std::size_t m = 0; m < v.M(); ++m) {
    result.accumulate(g.w_left[m], p.w_left[m]);
    result.accumulate(g.b_left[m], p.b_left[m]);
    result.accumulate(g.omega[m], p.omega[m]);
    result.accumulate(g.sigma_left[m], p.sigma_left[m]);
  }
  result.accumulate(g.w_R, p.w_R);
  result.accumulate(g.b, p.b);
  result.accumulate(g.sigma_R, p.sigma_R);
  return result;
}

template <typename T>
struct GuideDraw {
  BasicModelParams<T> params;
  T log_q{};         // guide density in unconstrained coordinates (Normal part) plus Dirichlet
  T log_jacobian{};  // log |d constrained / d unconstrained| for the ordered transforms
};

/// Pushes one noise draw through the guide to constrained model parameters.
template <typename T>
GuideDraw<T> reparameterize(std::span<const T> theta, const GuideLayout& L, const ModelSupport& support,
                            const GuideNoise& noise) {
  using std::exp;
  GuideDraw<T> out;
  T log_q = T(0.0);
  auto normal_draw = [&](std::size_t loc_i, std::size_t log_scale_i, double eps) {
    log_q = log_q - theta[log_scale_i] - 0.5 * eps * eps - kLogSqrt2Pi;
    return theta[loc_i] + exp(theta[log_scale_i]) * eps;
  };

  std::vector<T> y_thr;
  for (std::size_t k = 0; k < L.K; ++k)
    y_thr.push_back(normal_draw(L.thr_loc() + k, L.thr_log_scale() + k, noise.thresholds[k]));
  const auto thr = stick_breaking<T>(y_thr);
  out.params.thresholds = tau_ordered<T>(thr.simplex, support.threshold);

  out.params.b = normal_draw(L.b_loc(), L.b_log_scale(), noise.b);
  out.params.w_R = normal_draw(L.w_R_loc(), L.w_R_log_scale(), noise.w_R);

  std::vector<T> y_w;
  for (std::size_t m = 0; m < L.M; ++m)
    y_w.push_back(normal_draw(L.slope_loc() + m, L.slope_log_scale() + m, noise.weights[m]));
  const auto wts = stick_breaking<T>(y_w);
  std::vector<T> ordered_w = tau_ordered<T>(wts.simplex, support.slope);
  out.params.w_left = std::move(ordered_w);

  std::vector<T> concentration, gammas;
  T gamma_sum = T(0.0);
  for (std::size_t m = 0; m < L.M; ++m) {
    concentration.push_back(exp(theta[L.log_concentration() + m]));
    gammas.push_back(gamma_by_inversion(concentration.back(), noise.gamma_u[m]));
    gamma_sum = gamma_sum + gammas.back();
  }
  for (std::size_t m = 0; m < L.M; ++m) out.params.omega.push_back(gammas[m] / gamma_sum);
  log_q = log_q + log_dirichlet<T>(out.params.omega, concentration);

  for (std::size_t m = 0; m < L.M; ++m) out.params.sigma_left.push_back(exp(theta[L.log_sigma_left() + m]));
  out.params.sigma_R = exp(theta[L.log_sigma_R()]);

  out.params.b_left = derive_biases<T>(out.params.w_R, out.params.b, out.params.w_left,
                                       out.params.top_threshold());

  out.log_q = log_q;
  out.log_jacobian = thr.log_abs_det_jacobian + static_cast<double>(L.K) * std::log(support.threshold.width()) +
                     wts.log_abs_det_jacobian + static_cast<double>(L.M) * std::log(support.slope.width());
  return out;
}

/// One Monte Carlo term: log p(data, latents) + log|J| - log q.
template <typename T>
T elbo_term(std::span<const T> theta, const GuideLayout& L, const ModelSupport& support,
            const ModelPriors& priors, std::span<const ScaledObservation> obs, const GuideNoise& noise) {
  auto draw = reparameterize<T>(theta, L, support, noise);
  const T prior = log_prior<T>(draw.params, priors, support);
  const T lik = likelihood_term(draw.params, obs);
  return lik + prior + draw.log_jacobian - draw.log_q;
}

inline double estimate_elbo(const GuidePosterior& guide, const ModelPriors& priors,
                            std::span<const ScaledObservation> obs, int n_samples, std::uint64_t seed) {
  const GuideLayout L = layout_of(guide);
  const auto theta = pack(guide);
  std::mt19937_64 rng(seed);
  double total = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    const auto noise = draw_noise(rng, L);
    total += elbo_term<double>(theta, L, guide.support, priors, obs, noise);
  }
  const double elbo = total / n_samples;
  if (!std::isfinite(elbo)) throw Error(ErrorCode::NonFinite, "ELBO is not finite");
  return elbo;
}

struct ElboGradient {
  double value = 0.0;
  std::vector<double> gradient;  // with respect to pack(guide)
};

/// ELBO estimate and its exact gradient for the noise drawn from `rng`.
inline ElboGradient elbo_with_gradient(std::span<const double> theta, const GuideLayout& L,
                                       const ModelSupport& support, const ModelPriors& priors,
                                       std::span<const ScaledObservation> obs, int n_samples,
                                       std::mt19937_64& rng) {
  std::vector<Dual> dual_theta;
  dual_theta.reserve(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) dual_theta.push_back(Dual::variable(theta[i], i, theta.size()));

  ElboGradient out;
  out.gradient.assign(theta.size(), 0.0);
  for (int s = 0; s < n_samples; ++s) {
    const auto noise = draw_noise(rng, L);
    const Dual e = elbo_term<Dual>(dual_theta, L, support, priors, obs, noise);
    out.value += e.value();
    for (std::size_t i = 0; i < theta.size(); ++i) out.gradient[i] += e.derivative(i);
  }
  out.value /= n_samples;
  for (auto& g : out.gradient) g /= n_samples;
  return out;
}

/// Same quantity as elbo_with_gradient but value-only, for finite differences.
inline double elbo_value(std::span<const double> theta, const GuideLayout& L, const ModelSupport& support,
                         const ModelPriors& priors, std::span<const ScaledObservation> obs, int n_samples,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double total = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    const auto noise = draw_noise(rng, L);
    total += elbo_term<double>(theta, L, support, priors, obs, noise);
  }
  return total / n_samples;
}

// ---------------------------------------------------------------------------
// Generic Normal mean-field ELBO (used to validate the estimator on toy
// models with a closed-form ELBO).

struct ElboEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

template <typename LogJoint>
ElboEstimate estimate_normal_elbo(LogJoint&& log_joint, std::span<const double> loc,
                                  std::span<const double> scale, int n_samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(loc.size());
  double mean = 0.0, m2 = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    double log_q = 0.0;
    for (std::size_t i = 0; i < loc.size(); ++i) {
      const double eps = normal(rng);
      z[i] = loc[i] + scale[i] * eps;
      log_q += -std::log(scale[i]) - 0.5 * eps * eps - kLogSqrt2Pi;
    }
    const double term = log_joint(std::span<const double>(z)) - log_q;
    const double delta = term - mean;
    mean += delta / (s + 1);
    m2 += delta * (term - mean);
  }
  const double var = n_samples > 1 ? m2 / (n_samples - 1) : 0.0;
  return {mean, std::sqrt(var / n_samples)};
}

// ---------------------------------------------------------------------------
// Initialisation

namespace detail {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_std = 0.0;
};

inline LineFit least_squares(std::span<const ScaledObservation> obs) {
  LineFit fit;
  if (obs.empty()) return fit;
  const double n = static_cast<double>(obs.size());
  double mt = 0.0, mc = 0.0;
  for (const auto& o : obs) {
    mt += o.t;
    mc += o.c;
  }
  mt /= n;
  mc /= n;
  double stt = 0.0, stc = 0.0;
  for (const auto& o : obs) {
    stt += (o.t - mt) * (o.t - mt);
    stc += (o.t - mt) * (o.c - mc);
  }
  fit.slope = stt > 0.0 ? stc / stt : 0.0;
  fit.intercept = mc - fit.slope * mt;
  double ss = 0.0;
  for (const auto& o : obs) {
    const double r = o.c - (fit.slope * o.t + fit.intercept);
    ss += r * r;
  }
  fit.residual_std = std::sqrt(ss / n);
  return fit;
}

/// Linear-interpolation percentile of sorted values, q in [0, 1].
inline double percentile(std::span<const double> sorted, double q) {
  if (sorted.size() == 1) return sorted[0];
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline constexpr double kMinInitialSigma = 1e-2;
inline constexpr double kInitialGuideScale = 0.1;
inline constexpr double kInitialConcentration = 2.0;

}  // namespace detail

inline GuidePosterior init_guide(const ModelPriors& priors, std::span<const ScaledObservation> obs) {
  priors.validate();
  if (obs.size() < kMinFitObservations)
    throw Error(ErrorCode::TooFewObservations,
                "need at least " + std::to_string(kMinFitObservations) + " observations, got " +
                    std::to_string(obs.size()));
  const std::size_t K = priors.K();
  const std::size_t M = priors.M();

  GuidePosterior g;
  g.support.threshold = threshold_support_for(obs);
  g.support.slope = priors.slope_support;

  std::vector<double> temps;
  temps.reserve(obs.size());
  for (const auto& o : obs) temps.push_back(o.t);
  std::sort(temps.begin(), temps.end());

  // Top threshold at the 40th percentile, lower ones evenly spaced beneath it.
  const Support& ts = g.support.threshold;
  const double t_top = detail::percentile(temps, 0.4);
  std::vector<double> thresholds(K);
  for (std::size_t k = 0; k < K; ++k)
    thresholds[k] = ts.low + (t_top - ts.low) * static_cast<double>(k + 1) / static_cast<double>(K);
  const auto thr_simplex = tau_preimage<double>(thresholds, ts);
  g.threshold_logits.loc = stick_breaking_inverse(thr_simplex);
  g.threshold_logits.scale.assign(K, detail::kInitialGuideScale);

  // Right branch from the warmest 30 %.
  const double warm_cut = detail::percentile(temps, 0.7);
  std::vector<ScaledObservation> warm, cold;
  for (const auto& o : obs) {
    if (o.t >= warm_cut) warm.push_back(o);
    if (o.t < t_top) cold.push_back(o);
  }
  const auto right = detail::least_squares(warm);
  g.b.loc = {right.intercept};
  g.b.scale = {detail::kInitialGuideScale};
  g.w_R.loc = {right.slope};
  g.w_R.scale = {detail::kInitialGuideScale};
  g.log_sigma_R = std::log(std::max(right.residual_std, detail::kMinInitialSigma));

  // Left slopes at 2x, 4x, ... the cold-region slope, kept strictly inside the support.
  const auto left = cold.size() >= 2 ? detail::least_squares(cold) : detail::LineFit{0.0, 0.0, 0.0};
  const Support& ss = g.support.slope;
  const double margin = 0.05 * ss.width();
  std::vector<double> slopes(M);
  for (std::size_t m = 0; m < M; ++m)
    slopes[m] = std::clamp(2.0 * static_cast<double>(m + 1) * left.slope, ss.low + margin, ss.high - margin);
  std::sort(slopes.begin(), slopes.end());
  const double min_gap = 0.02 * ss.width();
  bool separated = true;
  for (std::size_t m = 1; m < M; ++m)
    if (slopes[m] - slopes[m - 1] < min_gap) separated = false;
  if (!separated) {
    for (std::size_t m = 0; m < M; ++m)
      slopes[m] = ss.low + ss.width() * static_cast<double>(m + 1) / static_cast<double>(M + 1);
  }
  const auto w_simplex = tau_preimage<double>(slopes, ss);
  g.weight_logits.loc = stick_breaking_inverse(w_simplex);
  g.weight_logits.scale.assign(M, detail::kInitialGuideScale);

  g.omega_concentration.assign(M, detail::kInitialConcentration);
  const double left_sigma = cold.size() >= 2 ? left.residual_std : right.residual_std;
  g.log_sigma_left.assign(M, std::log(std::max(left_sigma, detail::kMinInitialSigma)));
  return g;
}

// ---------------------------------------------------------------------------
// Posterior summaries

struct Stat {
  double mean = 0.0;
  double std = 0.0;
};

struct PosteriorSummary {
  std::vector<Stat> thresholds;
  Stat b, w_R;
  std::vector<Stat> w_left, b_left, omega;
  std::vector<double> sigma_left;
  double sigma_R = 0.0;
  std::size_t n_samples = 0;

  const Stat& t_c() const { return thresholds.back(); }
};

inline PosteriorSummary to_physical(const PosteriorSummary& s, const ScalingParams& sc) {
  PosteriorSummary p = s;
  for (auto& t : p.thresholds) t = {t.mean * sc.t_scale, t.std * sc.t_scale};
  p.b = {invert_scaling(s.b.mean, sc, ScaleKind::Consumption), s.b.std * sc.c_std};
  p.w_R = {slope_to_physical(s.w_R.mean, sc), slope_to_physical(s.w_R.std, sc)};
  for (std::size_t m = 0; m < s.w_left.size(); ++m) {
    p.w_left[m] = {slope_to_physical(s.w_left[m].mean, sc), slope_to_physical(s.w_left[m].std, sc)};
    p.b_left[m] = {invert_scaling(s.b_left[m].mean, sc, ScaleKind::Consumption), s.b_left[m].std * sc.c_std};
    p.sigma_left[m] = s.sigma_left[m] * sc.c_std;
  }
  p.sigma_R = s.sigma_R * sc.c_std;
  return p;
}

/// Monte Carlo means and standard deviations of every derived quantity. The
/// bias chain is applied per draw, so b_m carries threshold uncertainty.
inline PosteriorSummary posterior_summary(const GuidePosterior& guide, int n_samples, std::uint64_t seed) {
  const GuideLayout L = layout_of(guide);
  const auto theta = pack(guide);
  std::mt19937_64 rng(seed);

  struct Welford {
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    void add(double x) {
      ++n;
      const double d = x - mean;
      mean += d / static_cast<double>(n);
      m2 += d * (x - mean);
    }
    Stat stat() const { return {mean, n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0}; }
  };
  std::vector<Welford> thr(L.K), wl(L.M), bl(L.M), om(L.M);
  Welford b, wr;
  for (int s = 0; s < n_samples; ++s) {
    const auto noise = draw_noise(rng, L);
    const auto draw = reparameterize<double>(theta, L, guide.support, noise);
    const auto& p = draw.params;
    for (std::size_t k = 0; k < L.K; ++k) thr[k].add(p.thresholds[k]);
    b.add(p.b);
    wr.add(p.w_R);
    for (std::size_t m = 0; m < L.M; ++m) {
      wl[m].add(p.w_left[m]);
      bl[m].add(p.b_left[m]);
      om[m].add(p.omega[m]);
    }
  }
  PosteriorSummary out;
  out.n_samples = static_cast<std::size_t>(n_samples);
  for (const auto& w : thr) out.thresholds.push_back(w.stat());
  out.b = b.stat();
  out.w_R = wr.stat();
  for (std::size_t m = 0; m < L.M; ++m) {
    out.w_left.push_back(wl[m].stat());
    out.b_left.push_back(bl[m].stat());
    out.omega.push_back(om[m].stat());
    out.sigma_left.push_back(std::exp(guide.log_sigma_left[m]));
  }
  out.sigma_R = std::exp(guide.log_sigma_R);
  return out;
}

// ---------------------------------------------------------------------------
// Fit

enum class StateLabel { Home, Away };

inline std::string_view to_string(StateLabel s) { return s == StateLabel::Home ? "home" : "away"; }

/// The component whose line is highest at the coldest observed temperature is
/// "home"; all others are "away". Ties go to the lower index.
inline std::vector<StateLabel> label_components(const ModelParams& p, double coldest_t) {
  std::size_t home = 0;
  double best = p.w_left[0] * coldest_t + p.b_left[0];
  for (std::size_t m = 1; m < p.M(); ++m) {
    const double v = p.w_left[m] * coldest_t + p.b_left[m];
    if (v > best) {
      best = v;
      home = m;
    }
  }
  std::vector<StateLabel> labels(p.M(), StateLabel::Away);
  labels[home] = StateLabel::Home;
  return labels;
}

struct FitResult {
  std::string household_id;
  GuidePosterior guide;
  ScalingParams scaling;
  ModelPriors priors;
  FitConfig config;
  std::vector<double> elbo_trace;
  bool converged = false;
  PosteriorSummary summary;           // scaled units
  PosteriorSummary summary_physical;  // kWh, degC, kWh/degC
  std::vector<StateLabel> state_labels;
  double coldest_t = 0.0;  // scaled
  std::size_t n_observations = 0;

  /// Posterior-mean point estimate with biases re-derived so continuity is exact.
  ModelParams point_params() const {
    std::vector<double> thresholds, w_left, omega, sigma_left;
    for (const auto& t : summary.thresholds) thresholds.push_back(t.mean);
    for (const auto& w : summary.w_left) w_left.push_back(w.mean);
    const double conc_total = std::accumulate(guide.omega_concentration.begin(), guide.omega_concentration.end(), 0.0);
    for (double a : guide.omega_concentration) omega.push_back(a / conc_total);
    for (double ls : guide.log_sigma_left) sigma_left.push_back(std::exp(ls));
    return make_params(std::move(thresholds), summary.b.mean, summary.w_R.mean, std::move(w_left),
                       std::move(omega), std::move(sigma_left), std::exp(guide.log_sigma_R));
  }
};

/// Relative change between the means of the last two ELBO windows.
inline bool elbo_converged(std::span<const double> trace, int window, double tol) {
  const auto w = static_cast<std::size_t>(window);
  if (trace.size() < 2 * w) return false;
  const double last = std::accumulate(trace.end() - static_cast<std::ptrdiff_t>(w), trace.end(), 0.0) / w;
  const double prev = std::accumulate(trace.end() - static_cast<std::ptrdiff_t>(2 * w),
                                      trace.end() - static_cast<std::ptrdiff_t>(w), 0.0) / w;
  return std::abs(last - prev) <= tol * std::max(std::abs(prev), 1e-12);
}

/// Fits on already-scaled observations.
inline FitResult fit_scaled(std::span<const ScaledObservation> obs, const ScalingParams& scaling,
                            const ModelPriors& priors, const FitConfig& config, std::string household_id = {}) {
  config.validate();
  GuidePosterior guide = init_guide(priors, obs);
  const GuideLayout L = layout_of(guide);
  std::vector<double> theta = pack(guide);

  Adam adam(theta.size(), {config.learning_rate, config.beta1, config.beta2, 1e-8});
  std::mt19937_64 rng(config.seed);

  FitResult result;
  result.household_id = std::move(household_id);
  result.elbo_trace.reserve(static_cast<std::size_t>(config.n_steps));
  for (int step = 0; step < config.n_steps; ++step) {
    ElboGradient eg;
    try {
      eg = elbo_with_gradient(theta, L, guide.support, priors, obs, config.n_mc_samples, rng);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFinite)
        throw Error(ErrorCode::Diverged, "ELBO not finite at step " + std::to_string(step));
      throw;
    }
    if (!std::isfinite(eg.value) ||
        std::any_of(eg.gradient.begin(), eg.gradient.end(), [](double g) { return !std::isfinite(g); }))
      throw Error(ErrorCode::Diverged, "ELBO not finite at step " + std::to_string(step));
    result.elbo_trace.push_back(eg.value);
    adam.ascend(theta, eg.gradient);
  }

  result.guide = unpack(theta, guide);
  result.scaling = scaling;
  result.priors = priors;
  result.config = config;
  result.converged = elbo_converged(result.elbo_trace, config.convergence_window, config.convergence_tol);
  result.summary = posterior_summary(result.guide, config.summary_samples, config.seed + 1);
  result.summary_physical = to_physical(result.summary, scaling);
  result.n_observations = obs.size();
  result.coldest_t = std::min_element(obs.begin(), obs.end(), [](const auto& a, const auto& b) {
                       return a.t < b.t;
                     })->t;
  result.state_labels = label_components(result.point_params(), result.coldest_t);
  return result;
}

/// Fits one household on its complete days.
inline FitResult fit(const HouseholdSeries& series, const ModelPriors& priors, const FitConfig& config) {
  if (series.complete_days() < kMinFitObservations)
    throw Error(ErrorCode::TooFewObservations,
                "household " + series.meta.household_id + " has " + std::to_string(series.complete_days()) +
                    " complete days");
  const ScalingParams scaling = compute_scaling(series);
  const auto obs = scaled_observations(series, scaling);
  return fit_scaled(obs, scaling, priors, config, series.meta.household_id);
}

}  // namespace heatdisagg
