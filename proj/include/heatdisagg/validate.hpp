#pragma once

// Temporal A/B validation of heating disaggregation.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "heatdisagg/disagg.hpp"
#include "heatdisagg/error.hpp"
#include "heatdisagg/infer.hpp"
#include "heatdisagg/ingest.hpp"
#include "heatdisagg/timeutil.hpp"

namespace heatdisagg {

inline constexpr double kRelativeRmseEpsilonKwh = 0.05;
inline constexpr std::size_t kMinValidationPairs = 10;
inline constexpr std::size_t kMinValidationDays = 180;

/// January 15 of the heating season that ends in the series: the one in the
/// year of `last` when it is not after `last`, otherwise the year before.
inline Date default_split_date(Date last) {
  using namespace std::chrono;
  const year_month_day ymd{last};
  const Date candidate{ymd.year() / January / 15};
  return candidate <= last ? candidate : Date{(ymd.year() - years{1}) / January / 15};
}

inline Date default_split_date(const HouseholdSeries& series) {
  if (series.days.empty()) throw Error(ErrorCode::EmptySide, "empty series");
  const auto last = std::max_element(series.days.begin(), series.days.end(),
                                     [](const auto& a, const auto& b) { return a.date < b.date; });
  return default_split_date(last->date);
}

/// A holds the days strictly before `split_date`, B the rest; order is kept.
inline std::pair<HouseholdSeries, HouseholdSeries> split_ab(const HouseholdSeries& series, Date split_date) {
  HouseholdSeries a, b;
  a.meta = b.meta = series.meta;
  a.station_id = b.station_id = series.station_id;
  for (const auto& d : series.days) (d.date < split_date ? a : b).days.push_back(d);
  if (a.days.empty()) throw Error(ErrorCode::EmptySide, "no days before " + format_date(split_date));
  if (b.days.empty()) throw Error(ErrorCode::EmptySide, "no days on or after " + format_date(split_date));
  return {std::move(a), std::move(b)};
}

struct RelativeRmse {
  double delta = 0.0;
  std::size_t n_retained = 0;
  std::size_t n_excluded = 0;
};

/// Root mean squared relative deviation of `pred` from `truth`, skipping pairs
/// with |truth| < epsilon.
inline RelativeRmse relative_rmse_detail(std::span<const double> truth, std::span<const double> pred,
                                         double epsilon = kRelativeRmseEpsilonKwh) {
  if (truth.size() != pred.size()) throw Error(ErrorCode::InvalidArgument, "truth and prediction differ in length");
  if (truth.empty()) throw Error(ErrorCode::InvalidArgument, "empty input");
  RelativeRmse r;
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (std::abs(truth[i]) < epsilon) {
      ++r.n_excluded;
      continue;
    }
    const double rel = (truth[i] - pred[i]) / truth[i];
    sum += rel * rel;
    ++r.n_retained;
  }
  if (r.n_retained == 0) throw Error(ErrorCode::AllExcluded, "every truth value is below epsilon");
  r.delta = std::sqrt(sum / static_cast<double>(r.n_retained));
  return r;
}

inline double relative_rmse(std::span<const double> truth, std::span<const double> pred,
                            double epsilon = kRelativeRmseEpsilonKwh) {
  return relative_rmse_detail(truth, pred, epsilon).delta;
}

struct ValidationOptions {
  std::optional<Date> split_date;  // default_split_date of the series when absent
  double epsilon_kwh = kRelativeRmseEpsilonKwh;
  std::size_t min_complete_days = kMinValidationDays;
};

struct ValidationRow {
  std::string household_id;
  Date split_date;
  std::size_t n_b = 0;         // retained B-day pairs
  std::size_t n_excluded = 0;  // B days dropped by the epsilon filter
  double delta = 0.0;
};

/// Compares two fits' clipped heating means on the days of `b`.
inline ValidationRow compare_on(const HouseholdSeries& b, const FitResult& fit_truth, const FitResult& fit_pred,
                                double epsilon_kwh = kRelativeRmseEpsilonKwh) {
  const auto truth_rows = disaggregate_series(b, fit_truth);
  const auto pred_rows = disaggregate_series(b, fit_pred);
  std::map<Date, double> pred_by_date;
  for (const auto& r : pred_rows) pred_by_date[r.date] = r.heating_mean_clipped_kwh;
  std::vector<double> truth, pred;
  for (const auto& r : truth_rows) {
    const auto it = pred_by_date.find(r.date);
    if (it == pred_by_date.end()) continue;
    truth.push_back(r.heating_mean_clipped_kwh);
    pred.push_back(it->second);
  }
  const auto rr = relative_rmse_detail(truth, pred, epsilon_kwh);
  ValidationRow row;
  row.household_id = b.meta.household_id;
  row.n_b = rr.n_retained;
  row.n_excluded = rr.n_excluded;
  row.delta = rr.delta;
  return row;
}

/// Fits on A and on A∪B, then scores the A-fit's heating on B against the
/// full fit's heating on B.
inline ValidationRow validate_household(const HouseholdSeries& series, const ModelPriors& priors,
                                        const FitConfig& config, const ValidationOptions& options = {}) {
  const Date split = options.split_date ? *options.split_date : default_split_date(series);
  auto [a, b] = split_ab(series, split);
  const auto id = series.meta.household_id;
  if (series.complete_days() < options.min_complete_days)
    throw Error(ErrorCode::TooFewObservations, id + ": " + std::to_string(series.complete_days()) +
                                                   " complete days in A∪B");
  if (a.complete_days() < options.min_complete_days)
    throw Error(ErrorCode::TooFewObservations, id + ": " + std::to_string(a.complete_days()) +
                                                   " complete days before " + format_date(split));
  const FitResult fit_ab = fit(series, priors, config);
  const FitResult fit_a = fit(a, priors, config);
  auto row = compare_on(b, fit_ab, fit_a, options.epsilon_kwh);
  row.split_date = split;
  return row;
}

struct ValidationFailure {
  std::string household_id;
  ErrorCode code = ErrorCode::InvalidArgument;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationRow> rows;
  std::vector<ValidationFailure> failures;
  Date split_date;
  double mean_delta = std::numeric_limits<double>::quiet_NaN();
  double std_delta = std::numeric_limits<double>::quiet_NaN();  // sample std; 0 for one household
  std::size_t n_households = 0;                                 // rows with n_b >= 10
};

/// Runs `task(i)` for i in [0, n) on up to `jobs` threads.
template <typename Task>
void parallel_for(std::size_t n, unsigned jobs, Task&& task) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> workers;
  workers.reserve(jobs);
  for (unsigned j = 0; j < jobs; ++j)
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) task(i);
    });
}

inline void aggregate(ValidationReport& report) {
  std::vector<double> deltas;
  for (const auto& r : report.rows)
    if (r.n_b >= kMinValidationPairs) deltas.push_back(r.delta);
  report.n_households = deltas.size();
  if (deltas.empty()) return;
  double mean = 0.0;
  for (double d : deltas) mean += d;
  mean /= static_cast<double>(deltas.size());
  double ss = 0.0;
  for (double d : deltas) ss += (d - mean) * (d - mean);
  report.mean_delta = mean;
  report.std_delta = deltas.size() > 1 ? std::sqrt(ss / static_cast<double>(deltas.size() - 1)) : 0.0;
}

/// One split date for the whole cohort, derived from its latest day.
inline ValidationReport validate_cohort(std::span<const HouseholdSeries> households, const ModelPriors& priors,
                                        const FitConfig& config, ValidationOptions options = {},
                                        unsigned jobs = 1) {
  if (households.empty()) throw Error(ErrorCode::AllFailed, "no households");
  if (!options.split_date) {
    std::optional<Date> last;
    for (const auto& h : households)
      for (const auto& d : h.days)
        if (!last || d.date > *last) last = d.date;
    if (!last) throw Error(ErrorCode::AllFailed, "no days in any household");
    options.split_date = default_split_date(*last);
  }

  std::vector<std::optional<ValidationRow>> rows(households.size());
  std::vector<std::optional<ValidationFailure>> failures(households.size());
  parallel_for(households.size(), jobs, [&](std::size_t i) {
    try {
      rows[i] = validate_household(households[i], priors, config, options);
    } catch (const Error& e) {
      failures[i] = ValidationFailure{households[i].meta.household_id, e.code(), e.what()};
    }
  });

  ValidationReport report;
  report.split_date = *options.split_date;
  for (std::size_t i = 0; i < households.size(); ++i) {
    if (rows[i]) report.rows.push_back(std::move(*rows[i]));
    if (failures[i]) report.failures.push_back(std::move(*failures[i]));
  }
  if (report.rows.empty()) throw Error(ErrorCode::AllFailed, "no household validated");
  aggregate(report);
  return report;
}

inline void write_validation_csv(std::ostream& out, const ValidationReport& report) {
  out << "household_id,n_b,n_excluded,delta_j,error\n";
  char buf[128];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, ",%zu,%zu,%.6f,\n", r.n_b, r.n_excluded, r.delta);
    out << r.household_id << buf;
  }
  for (const auto& f : report.failures) out << f.household_id << ",,,," << to_string(f.code) << '\n';
}

inline nlohmann::ordered_json validation_summary_json(const ValidationReport& report) {
  nlohmann::ordered_json j;
  auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(); };
  j["mean_delta"] = finite_or_null(report.mean_delta);
  j["std_delta"] = finite_or_null(report.std_delta);
  j["n_households"] = report.n_households;
  j["split_date"] = format_date(report.split_date);
  j["n_failed"] = report.failures.size();
  return j;
}

}  // namespace heatdisagg
