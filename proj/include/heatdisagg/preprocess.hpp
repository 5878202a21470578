#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "heatdisagg/error.hpp"
#include "heatdisagg/ingest.hpp"

namespace heatdisagg {

inline constexpr double kDefaultTemperatureScale = 30.0;

/// Per-household standardisation: consumption is centred and divided by its
/// sample standard deviation, temperature is divided by a fixed scale.
struct ScalingParams {
  double c_mean = 0.0;
  double c_std = 1.0;
  double t_scale = kDefaultTemperatureScale;
};

/// Observation after scaling. Model code works exclusively on these.
struct ScaledObservation {
  double c = 0.0;
  double t = 0.0;
};

enum class ScaleKind { Consumption, ConsumptionDelta, Temperature };

inline ScalingParams compute_scaling(std::span<const double> consumptions) {
  if (consumptions.size() < 2)
    throw Error(ErrorCode::DegenerateSample, "need at least two observations");
  double mean = 0.0;
  for (double c : consumptions) mean += c;
  mean /= static_cast<double>(consumptions.size());
  double ss = 0.0;
  for (double c : consumptions) ss += (c - mean) * (c - mean);
  const double sd = std::sqrt(ss / static_cast<double>(consumptions.size() - 1));
  if (!(sd > 0.0)) throw Error(ErrorCode::DegenerateSample, "all consumptions are equal");
  return {mean, sd, kDefaultTemperatureScale};
}

/// Scaling is computed over complete days only; partial days are biased low.
inline ScalingParams compute_scaling(const HouseholdSeries& series) {
  std::vector<double> c;
  c.reserve(series.days.size());
  for (const auto& d : series.days)
    if (d.complete) c.push_back(d.consumption_kwh);
  return compute_scaling(c);
}

inline ScaledObservation apply_scaling(double c_kwh, double t_c, const ScalingParams& s) {
  return {(c_kwh - s.c_mean) / s.c_std, t_c / s.t_scale};
}

inline double invert_scaling(double value, const ScalingParams& s, ScaleKind kind) {
  switch (kind) {
    case ScaleKind::Consumption: return value * s.c_std + s.c_mean;
    case ScaleKind::ConsumptionDelta: return value * s.c_std;
    case ScaleKind::Temperature: return value * s.t_scale;
  }
  return value;
}

/// Variances of consumption differences convert with the squared scale.
inline double invert_variance(double var_scaled, const ScalingParams& s) {
  return var_scaled * s.c_std * s.c_std;
}

/// Slopes (dc/dT) in physical units, kWh per degC.
inline double slope_to_physical(double w, const ScalingParams& s) { return w * s.c_std / s.t_scale; }

/// Complete days of a series, scaled, in date order.
inline std::vector<ScaledObservation> scaled_observations(const HouseholdSeries& series,
                                                          const ScalingParams& s) {
  std::vector<ScaledObservation> out;
  out.reserve(series.days.size());
  for (const auto& d : series.days)
    if (d.complete) out.push_back(apply_scaling(d.consumption_kwh, d.temp_c, s));
  return out;
}

}  // namespace heatdisagg
