#pragma once

// Piecewise mixture linear model of daily consumption against temperature.
//
// Above the top threshold consumption follows a single line (w_R, b). Below it
// consumption is a mixture of M lines whose slopes are ordered and whose
// biases are chained so that every line meets the right branch at the top
// threshold. All quantities here are in scaled units (see preprocess.hpp).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "heatdisagg/dual.hpp"
#include "heatdisagg/error.hpp"
#include "heatdisagg/ingest.hpp"
#include "heatdisagg/preprocess.hpp"

namespace heatdisagg {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))

/// Open interval that an ordered transform maps into.
struct Support {
  double low = 0.0;
  double high = 1.0;
  double width() const { return high - low; }
};

inline constexpr double kDefaultSlopeSupportLow = -10.0;

struct ModelPriors {
  std::vector<double> alpha_T{2.0, 2.0};
  double b_loc = 0.0;
  double b_scale = 1.0;
  double w_R_loc = 0.0;
  double w_R_scale = 0.5;
  std::vector<double> alpha_s{2.0, 2.0, 2.0};
  std::vector<double> alpha_omega{2.0, 2.0};
  /// Interval for the ordered left slopes; defaults to (kDefaultSlopeSupportLow, w_R_loc).
  Support slope_support{kDefaultSlopeSupportLow, 0.0};

  std::size_t K() const { return alpha_T.size() - 1; }
  std::size_t M() const { return alpha_omega.size(); }

  void validate() const {
    auto positive = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double a) { return a > 0.0; });
    };
    if (alpha_T.size() < 2) throw Error(ErrorCode::InvalidArgument, "alpha_T needs K+1 >= 2 entries");
    if (alpha_omega.size() < 2) throw Error(ErrorCode::InvalidArgument, "alpha_omega needs M >= 2 entries");
    if (alpha_s.size() != alpha_omega.size() + 1)
      throw Error(ErrorCode::InvalidArgument, "alpha_s must have M+1 entries");
    if (!positive(alpha_T) || !positive(alpha_s) || !positive(alpha_omega))
      throw Error(ErrorCode::InvalidArgument, "concentrations must be positive");
    if (!(b_scale > 0.0) || !(w_R_scale > 0.0))
      throw Error(ErrorCode::InvalidArgument, "prior scales must be positive");
    if (!(slope_support.low < slope_support.high))
      throw Error(ErrorCode::InvalidArgument, "slope support must satisfy low < high");
  }
};

/// Per-household supports of the two ordered transforms.
struct ModelSupport {
  Support threshold;
  Support slope;
};

/// Threshold support: observed scaled temperature range widened by 5 % per side.
inline Support threshold_support_for(std::span<const ScaledObservation> obs) {
  if (obs.empty()) throw Error(ErrorCode::TooFewObservations, "no observations");
  auto [lo, hi] = std::minmax_element(obs.begin(), obs.end(),
                                      [](const auto& a, const auto& b) { return a.t < b.t; });
  double width = hi->t - lo->t;
  if (!(width > 0.0)) width = 0.1;
  return {lo->t - 0.05 * width, hi->t + 0.05 * width};
}

template <typename T>
struct BasicModelParams {
  std::vector<T> thresholds;  // strictly increasing; back() is the top threshold
  T b{};                      // overall bias, also the right-branch bias
  T w_R{};
  std::vector<T> w_left;      // strictly increasing
  std::vector<T> b_left;      // derived by the continuity chain
  std::vector<T> omega;       // mixture weights on the simplex
  std::vector<T> sigma_left;
  T sigma_R{};

  const T& top_threshold() const { return thresholds.back(); }
  std::size_t M() const { return w_left.size(); }
};

using ModelParams = BasicModelParams<double>;

// ---------------------------------------------------------------------------
// Ordered transform

/// Maps a simplex of L components to L-1 strictly increasing values inside
/// `support` via cumulative sums.
template <typename T>
std::vector<T> tau_ordered(std::span<const T> simplex, Support support) {
  if (simplex.size() < 2) throw Error(ErrorCode::BadSimplex, "simplex needs at least two components");
  double total = 0.0;
  for (const auto& x : simplex) {
    if (!(value_of(x) > 0.0)) throw Error(ErrorCode::BadSimplex, "simplex components must be positive");
    total += value_of(x);
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::BadSimplex, "simplex does not sum to one");
  if (!(support.low < support.high)) throw Error(ErrorCode::InvalidArgument, "support must satisfy low < high");

  std::vector<T> out;
  out.reserve(simplex.size() - 1);
  T cumulative = simplex[0];
  for (std::size_t k = 0; k + 1 < simplex.size(); ++k) {
    if (k > 0) cumulative = cumulative + simplex[k];
    out.push_back(support.low + cumulative * support.width());
  }
  return out;
}

template <typename T>
std::vector<T> tau_ordered(const std::vector<T>& simplex, Support support) {
  return tau_ordered(std::span<const T>(simplex), support);
}

/// Pre-image of tau_ordered: the simplex whose cumulative sums give `ordered`.
template <typename T>
std::vector<T> tau_preimage(std::span<const T> ordered, Support support) {
  std::vector<T> simplex;
  simplex.reserve(ordered.size() + 1);
  T previous = T(support.low);
  for (const auto& r : ordered) {
    simplex.push_back((r - previous) / support.width());
    previous = r;
  }
  simplex.push_back((T(support.high) - previous) / support.width());
  return simplex;
}

template <typename T>
struct StickBreakingResult {
  std::vector<T> simplex;
  T log_abs_det_jacobian{};  // of the map y -> simplex[0..L-2]
};

/// Unconstrained R^{L-1} -> L-simplex by sigmoid stick breaking. The offset
/// log(L-1-k) makes y = 0 map to the uniform simplex; for L = 2 the single
/// coordinate is exactly logit of the first component.
template <typename T>
StickBreakingResult<T> stick_breaking(std::span<const T> y) {
  using std::log;
  StickBreakingResult<T> out;
  const std::size_t n = y.size();
  out.simplex.reserve(n + 1);
  T remaining = T(1.0);
  T log_det = T(0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const T shifted = y[k] - std::log(static_cast<double>(n - k));
    const T z = sigmoid(shifted);
    // log z = -softplus(-x), log(1-z) = -softplus(x)
    log_det = log_det + log(remaining) - softplus(-shifted) - softplus(shifted);
    out.simplex.push_back(z * remaining);
    remaining = remaining * (T(1.0) - z);
  }
  out.simplex.push_back(remaining);
  out.log_abs_det_jacobian = log_det;
  return out;
}

inline std::vector<double> stick_breaking_inverse(std::span<const double> simplex) {
  const std::size_t n = simplex.size() - 1;
  std::vector<double> y(n);
  double remaining = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double z = std::clamp(simplex[k] / remaining, 1e-12, 1.0 - 1e-12);
    y[k] = logit(z) + std::log(static_cast<double>(n - k));
    remaining -= simplex[k];
  }
  return y;
}

// ---------------------------------------------------------------------------
// Continuity chain

/// b_1 = (w_R - w_1) T + b, b_{m+1} = (w_m - w_{m+1}) T + b_m: every left line
/// passes through (T, w_R T + b).
template <typename T>
std::vector<T> derive_biases(const T& w_R, const T& b, std::span<const T> w_left, const T& t_top) {
  std::vector<T> biases;
  biases.reserve(w_left.size());
  T previous_w = w_R;
  T previous_b = b;
  for (const auto& w : w_left) {
    T next = (previous_w - w) * t_top + previous_b;
    biases.push_back(next);
    previous_w = w;
    previous_b = next;
  }
  return biases;
}

template <typename T>
std::vector<T> derive_biases(const T& w_R, const T& b, const std::vector<T>& w_left, const T& t_top) {
  return derive_biases(w_R, b, std::span<const T>(w_left), t_top);
}

inline ModelParams make_params(std::vector<double> thresholds, double b, double w_R,
                               std::vector<double> w_left, std::vector<double> omega,
                               std::vector<double> sigma_left, double sigma_R) {
  ModelParams p;
  p.thresholds = std::move(thresholds);
  p.b = b;
  p.w_R = w_R;
  p.w_left = std::move(w_left);
  p.omega = std::move(omega);
  p.sigma_left = std::move(sigma_left);
  p.sigma_R = sigma_R;
  p.b_left = derive_biases(p.w_R, p.b, p.w_left, p.top_threshold());
  return p;
}

/// Largest |w_m T + b_m - (w_R T + b)| at the top threshold.
inline double continuity_residual(const ModelParams& p) {
  const double t = p.top_threshold();
  const double right = p.w_R * t + p.b;
  double worst = 0.0;
  for (std::size_t m = 0; m < p.M(); ++m)
    worst = std::max(worst, std::abs(p.w_left[m] * t + p.b_left[m] - right));
  return worst;
}

/// Throws InvalidArgument when structural invariants are violated.
inline void check_params(const ModelParams& p, bool require_ordered = true) {
  const std::size_t m = p.w_left.size();
  if (p.thresholds.empty()) throw Error(ErrorCode::InvalidArgument, "no thresholds");
  if (m < 2 || p.b_left.size() != m || p.omega.size() != m || p.sigma_left.size() != m)
    throw Error(ErrorCode::InvalidArgument, "mixture arrays must have matching size M >= 2");
  if (require_ordered) {
    for (std::size_t i = 1; i < m; ++i)
      if (!(p.w_left[i - 1] < p.w_left[i]))
        throw Error(ErrorCode::InvalidArgument, "left weights must be strictly increasing");
    for (std::size_t i = 1; i < p.thresholds.size(); ++i)
      if (!(p.thresholds[i - 1] < p.thresholds[i]))
        throw Error(ErrorCode::InvalidArgument, "thresholds must be strictly increasing");
  }
  double total = 0.0;
  for (double w : p.omega) {
    if (w < 0.0) throw Error(ErrorCode::InvalidArgument, "negative mixture weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "omega must sum to one");
  for (double s : p.sigma_left)
    if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
  if (!(p.sigma_R > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma_R must be positive");
}

// ---------------------------------------------------------------------------
// Likelihood

/// Partial derivatives of the log-likelihood with respect to the line
/// parameters, treating the derived biases as free.
struct LikelihoodGradient {
  std::vector<double> w_left, b_left, omega, sigma_left;
  double w_R = 0.0, b = 0.0, sigma_R = 0.0;
};

inline double normal_log_density(double x, double mean, double sigma) {
  const double z = (x - mean) / sigma;
  return -0.5 * z * z - std::log(sigma) - kLogSqrt2Pi;
}

/// Observations strictly below the top threshold are explained by the
/// mixture with the categorical state summed out; the rest by the right
/// branch. Intermediate thresholds (K > 1) do not enter the likelihood.
inline double log_likelihood(const ModelParams& p, std::span<const ScaledObservation> obs,
                             LikelihoodGradient* grad = nullptr) {
  const std::size_t m_count = p.M();
  const double t_top = p.top_threshold();
  if (grad) {
    grad->w_left.assign(m_count, 0.0);
    grad->b_left.assign(m_count, 0.0);
    grad->omega.assign(m_count, 0.0);
    grad->sigma_left.assign(m_count, 0.0);
    grad->w_R = grad->b = grad->sigma_R = 0.0;
  }
  std::vector<double> log_terms(m_count), residual(m_count), log_omega(m_count), log_sigma(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    log_omega[m] = std::log(p.omega[m]);
    log_sigma[m] = std::log(p.sigma_left[m]);
  }
  const double log_sigma_R = std::log(p.sigma_R);

  double total = 0.0;
  for (const auto& o : obs) {
    if (o.t < t_top) {
      double max_term = -std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < m_count; ++m) {
        residual[m] = o.c - (p.w_left[m] * o.t + p.b_left[m]);
        const double z = residual[m] / p.sigma_left[m];
        log_terms[m] = log_omega[m] - 0.5 * z * z - log_sigma[m] - kLogSqrt2Pi;
        max_term = std::max(max_term, log_terms[m]);
      }
      double sum = 0.0;
      for (std::size_t m = 0; m < m_count; ++m) sum += std::exp(log_terms[m] - max_term);
      const double lse = max_term + std::log(sum);
      total += lse;
      if (grad) {
        for (std::size_t m = 0; m < m_count; ++m) {
          const double resp = std::exp(log_terms[m] - lse);
          const double inv_var = 1.0 / (p.sigma_left[m] * p.sigma_left[m]);
          const double d_mean = resp * residual[m] * inv_var;
          grad->w_left[m] += d_mean * o.t;
          grad->b_left[m] += d_mean;
          grad->omega[m] += resp / p.omega[m];
          grad->sigma_left[m] +=
              resp * (residual[m] * residual[m] * inv_var - 1.0) / p.sigma_left[m];
        }
      }
    } else {
      const double r = o.c - (p.w_R * o.t + p.b);
      const double z = r / p.sigma_R;
      total += -0.5 * z * z - log_sigma_R - kLogSqrt2Pi;
      if (grad) {
        const double inv_var = 1.0 / (p.sigma_R * p.sigma_R);
        grad->w_R += r * inv_var * o.t;
        grad->b += r * inv_var;
        grad->sigma_R += (r * r * inv_var - 1.0) / p.sigma_R;
      }
    }
  }
  if (!std::isfinite(total)) throw Error(ErrorCode::NonFinite, "log-likelihood is not finite");
  return total;
}

// ---------------------------------------------------------------------------
// Prior

template <typename T>
T log_dirichlet(std::span<const T> x, std::span<const T> alpha) {
  using std::log;
  T alpha_sum = T(0.0);
  T result = T(0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    alpha_sum = alpha_sum + alpha[i];
    result = result - lgamma_fn(alpha[i]) + (alpha[i] - 1.0) * log(x[i]);
  }
  return result + lgamma_fn(alpha_sum);
}

template <typename T>
T log_normal_density(const T& x, double mean, double sigma) {
  const T z = (x - mean) / sigma;
  return -0.5 * z * z - std::log(sigma) - kLogSqrt2Pi;
}

template <typename T>
struct LogPriorTerms {
  T thresholds{};  // Dirichlet on the pre-image plus the tau Jacobian
  T b{};
  T w_R{};
  T w_left{};      // Dirichlet on the pre-image plus the tau Jacobian
  T omega{};
  T total() const { return thresholds + b + w_R + w_left + omega; }
};

template <typename T>
std::vector<T> lift(const std::vector<double>& v) {
  return std::vector<T>(v.begin(), v.end());
}

/// Prior density of the constrained parameters, factor by factor.
template <typename T>
LogPriorTerms<T> log_prior_terms(const BasicModelParams<T>& p, const ModelPriors& priors,
                                 const ModelSupport& support) {
  LogPriorTerms<T> terms;
  const auto alpha_T = lift<T>(priors.alpha_T);
  const auto alpha_s = lift<T>(priors.alpha_s);
  const auto alpha_w = lift<T>(priors.alpha_omega);

  auto ordered_density = [](std::span<const T> ordered, Support s, const std::vector<T>& alpha) {
    const auto simplex = tau_preimage<T>(ordered, s);
    for (const auto& x : simplex)
      if (!(value_of(x) > 0.0)) throw Error(ErrorCode::NonFinite, "ordered value outside its support");
    return log_dirichlet<T>(simplex, alpha) -
           static_cast<double>(ordered.size()) * std::log(s.width());
  };
  terms.thresholds = ordered_density(p.thresholds, support.threshold, alpha_T);
  terms.w_left = ordered_density(p.w_left, support.slope, alpha_s);
  terms.b = log_normal_density(p.b, priors.b_loc, priors.b_scale);
  terms.w_R = log_normal_density(p.w_R, priors.w_R_loc, priors.w_R_scale);
  terms.omega = log_dirichlet<T>(p.omega, alpha_w);
  if (!std::isfinite(value_of(terms.total())))
    throw Error(ErrorCode::NonFinite, "log-prior is not finite");
  return terms;
}

template <typename T>
T log_prior(const BasicModelParams<T>& p, const ModelPriors& priors, const ModelSupport& support) {
  return log_prior_terms(p, priors, support).total();
}

// ---------------------------------------------------------------------------
// Forward simulation

/// Seasonal daily mean temperature: mean - amplitude * cos(2 pi (doy - coldest) / 365.25)
/// plus Gaussian noise, clamped to [min_c, max_c].
struct TemperatureProfile {
  double mean_c = 11.0;
  double amplitude_c = 10.0;
  double noise_c = 2.5;
  int coldest_day_of_year = 15;
  double min_c = -4.0;
  double max_c = 35.0;
};

inline constexpr int kRightBranchState = -1;

struct SyntheticHousehold {
  HouseholdSeries series;                   // physical units, all days complete
  std::vector<ScaledObservation> scaled;    // same days in the truth's scaled units
  ScalingParams truth_scaling;              // scaled -> physical map used to generate kWh
  ModelParams truth;
  std::vector<int> states;                  // mixture index, or kRightBranchState
  std::vector<double> heating_truth_scaled;
  std::vector<double> heating_truth_kwh;
  std::vector<double> heating_truth_clipped_kwh;
};

inline int day_of_year(Date d) {
  std::chrono::year_month_day ymd{d};
  return (d - Date{ymd.year() / std::chrono::January / 1}).count() + 1;
}

/// Draws a synthetic household from the generative model. Temperatures are
/// generated in degC, then scaled by truth_scaling.t_scale; consumption is
/// sampled in scaled units and mapped to kWh with truth_scaling.
inline SyntheticHousehold simulate(const ModelParams& params, int n_days, const TemperatureProfile& profile,
                                   std::uint64_t seed, const ScalingParams& truth_scaling = {20.0, 5.0, 30.0},
                                   Date start = Date{std::chrono::year{2019} / std::chrono::July / 1},
                                   HouseholdMeta meta = {}) {
  if (n_days < 1) throw Error(ErrorCode::InvalidArgument, "n_days must be >= 1");
  check_params(params, /*require_ordered=*/false);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::discrete_distribution<int> pick_state(params.omega.begin(), params.omega.end());

  SyntheticHousehold out;
  out.truth = params;
  out.truth_scaling = truth_scaling;
  if (meta.household_id.empty()) meta.household_id = "sim";
  out.series.meta = meta;
  out.series.station_id = "sim-station";

  const double t_top = params.top_threshold();
  const double base = params.w_R * t_top + params.b;
  for (int i = 0; i < n_days; ++i) {
    const Date date = start + std::chrono::days{i};
    const double phase = 2.0 * std::numbers::pi * (day_of_year(date) - profile.coldest_day_of_year) / 365.25;
    double temp_c = profile.mean_c - profile.amplitude_c * std::cos(phase) + profile.noise_c * std_normal(rng);
    temp_c = std::clamp(temp_c, profile.min_c, profile.max_c);
    const double t = temp_c / truth_scaling.t_scale;

    double c = 0.0;
    int state = kRightBranchState;
    double heating = 0.0;
    if (t < t_top) {
      state = pick_state(rng);
      c = params.w_left[state] * t + params.b_left[state] + params.sigma_left[state] * std_normal(rng);
      heating = c - base;
    } else {
      c = params.w_R * t + params.b + params.sigma_R * std_normal(rng);
    }
    out.scaled.push_back({c, t});
    out.states.push_back(state);
    out.heating_truth_scaled.push_back(heating);
    const double heating_kwh = heating * truth_scaling.c_std;
    out.heating_truth_kwh.push_back(heating_kwh);
    out.heating_truth_clipped_kwh.push_back(std::max(0.0, heating_kwh));
    out.series.days.push_back({date, invert_scaling(c, truth_scaling, ScaleKind::Consumption), temp_c, true});
  }
  return out;
}

}  // namespace heatdisagg
