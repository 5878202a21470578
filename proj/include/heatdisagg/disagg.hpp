#pragma once

// Heating disaggregation and occupancy decoding from a fitted posterior.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "heatdisagg/error.hpp"
#include "heatdisagg/infer.hpp"
#include "heatdisagg/ingest.hpp"
#include "heatdisagg/model.hpp"
#include "heatdisagg/preprocess.hpp"

namespace heatdisagg {

enum class DayState { Home, Away, AboveThreshold };

inline std::string_view to_string(DayState s) {
  switch (s) {
    case DayState::Home: return "home";
    case DayState::Away: return "away";
    case DayState::AboveThreshold: return "above_threshold";
  }
  return "above_threshold";
}

struct HeatingMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Heating part of a below-threshold day: c_tot minus the base load w_a T_c + b_a,
/// with w_a, T_c and b_a independent Normals. The variance is that of the
/// product w_a T_c plus the variance of b_a.
inline HeatingMoments heating_moments(double c_tot, Stat w_a, Stat t_c, Stat b_a) {
  HeatingMoments h;
  h.mean = c_tot - w_a.mean * t_c.mean - b_a.mean;
  const double mw2 = w_a.mean * w_a.mean;
  const double mt2 = t_c.mean * t_c.mean;
  h.variance = (w_a.std * w_a.std + mw2) * (t_c.std * t_c.std + mt2) - mw2 * mt2 + b_a.std * b_a.std;
  return h;
}

/// The base branch is the right branch, whose bias is the independently drawn b.
inline HeatingMoments heating_moments(double c_tot, const FitResult& fit) {
  return heating_moments(c_tot, fit.summary.w_R, fit.summary.t_c(), fit.summary.b);
}

struct DecodedState {
  DayState state = DayState::AboveThreshold;
  double probability = 1.0;
};

/// Most responsible mixture component at the given point estimate. Equal
/// responsibilities resolve to the "home" component.
inline DecodedState decode_state(const ScaledObservation& obs, const ModelParams& p,
                                 std::span<const StateLabel> labels) {
  if (obs.t >= p.top_threshold()) return {DayState::AboveThreshold, 1.0};
  const std::size_t M = p.M();
  std::vector<double> log_terms(M);
  double max_term = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < M; ++m) {
    log_terms[m] = std::log(p.omega[m]) +
                   normal_log_density(obs.c, p.w_left[m] * obs.t + p.b_left[m], p.sigma_left[m]);
    max_term = std::max(max_term, log_terms[m]);
  }
  double norm = 0.0;
  for (double lt : log_terms) norm += std::exp(lt - max_term);

  std::size_t best = M;
  double best_resp = -1.0;
  for (std::size_t m = 0; m < M; ++m) {
    const double resp = std::exp(log_terms[m] - max_term) / norm;
    const bool better = resp > best_resp ||
                        (resp == best_resp && labels[m] == StateLabel::Home && labels[best] != StateLabel::Home);
    if (better) {
      best = m;
      best_resp = resp;
    }
  }
  return {labels[best] == StateLabel::Home ? DayState::Home : DayState::Away, best_resp};
}

inline DecodedState decode_state(const ScaledObservation& obs, const FitResult& fit) {
  return decode_state(obs, fit.point_params(), fit.state_labels);
}

struct DisaggRow {
  Date date;
  double c_tot_kwh = 0.0;
  double heating_mean_kwh = 0.0;
  double heating_var_kwh2 = 0.0;
  double heating_mean_clipped_kwh = 0.0;
  double temp_c = 0.0;
  DayState state = DayState::AboveThreshold;
  double state_prob = 1.0;
};

/// Per-day heating estimates in kWh for the complete days of `series`.
/// Days at or above the posterior-mean threshold carry no heating.
inline std::vector<DisaggRow> disaggregate_series(const HouseholdSeries& series, const FitResult& fit) {
  if (!fit.household_id.empty() && fit.household_id != series.meta.household_id)
    throw Error(ErrorCode::ScalingMismatch, "fit belongs to household '" + fit.household_id + "', series to '" +
                                                series.meta.household_id + "'");
  const ModelParams point = fit.point_params();
  std::vector<DisaggRow> rows;
  rows.reserve(series.days.size());
  for (const auto& day : series.days) {
    if (!day.complete) continue;
    const auto obs = apply_scaling(day.consumption_kwh, day.temp_c, fit.scaling);
    DisaggRow row;
    row.date = day.date;
    row.c_tot_kwh = day.consumption_kwh;
    row.temp_c = day.temp_c;
    const auto decoded = decode_state(obs, point, fit.state_labels);
    row.state = decoded.state;
    row.state_prob = decoded.probability;
    if (decoded.state != DayState::AboveThreshold) {
      const auto h = heating_moments(obs.c, fit);
      row.heating_mean_kwh = invert_scaling(h.mean, fit.scaling, ScaleKind::ConsumptionDelta);
      row.heating_var_kwh2 = invert_variance(h.variance, fit.scaling);
      row.heating_mean_clipped_kwh = std::max(0.0, row.heating_mean_kwh);
    }
    rows.push_back(row);
  }
  return rows;
}

/// Centred moving average over calendar days. Missing dates inside a window
/// are simply absent; windows shrink at the series edges.
inline std::vector<double> moving_average(std::span<const Date> dates, std::span<const double> values,
                                          int window = 7) {
  if (window < 1) throw Error(ErrorCode::InvalidArgument, "window must be >= 1");
  if (dates.size() != values.size()) throw Error(ErrorCode::InvalidArgument, "dates and values differ in length");
  const int before = (window - 1) / 2;
  const int after = window / 2;
  std::vector<double> out(values.size());
  std::size_t lo = 0, hi = 0;  // current window is [lo, hi)
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Date first = dates[i] - std::chrono::days{before};
    const Date last = dates[i] + std::chrono::days{after};
    while (hi < values.size() && dates[hi] <= last) ++hi;
    while (lo < hi && dates[lo] < first) ++lo;
    double sum = 0.0;
    for (std::size_t j = lo; j < hi; ++j) sum += values[j];
    out[i] = sum / static_cast<double>(hi - lo);
  }
  return out;
}

/// Consecutive-day convenience overload.
inline std::vector<double> moving_average(std::span<const double> values, int window = 7) {
  std::vector<Date> dates(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) dates[i] = Date{} + std::chrono::days{static_cast<int>(i)};
  return moving_average(dates, values, window);
}

inline void write_disagg_csv(std::ostream& out, std::span<const DisaggRow> rows) {
  out << "date,c_tot_kwh,heating_mean_kwh,heating_var_kwh2,heating_clipped_kwh,state,state_prob\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%s,%.6f\n", format_date(r.date).c_str(), r.c_tot_kwh,
                  r.heating_mean_kwh, r.heating_var_kwh2, r.heating_mean_clipped_kwh,
                  std::string(to_string(r.state)).c_str(), r.state_prob);
    out << buf;
  }
}

}  // namespace heatdisagg
