#pragma once

// Exploratory statistics: cold-region slopes, category histograms and
// Normal vs Log-Normal Kolmogorov-Smirnov comparison.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "heatdisagg/error.hpp"
#include "heatdisagg/ingest.hpp"

namespace heatdisagg {

inline constexpr double kColdThresholdC = 15.0;

struct SlopeReport {
  std::string household_id;
  std::size_t n_cold_days = 0;
  double slope = 0.0;         // kWh/degC
  double slope_stderr = 0.0;  // OLS standard error
  double intercept = 0.0;
  double correlation = 0.0;
  HeatingType heating_type = HeatingType::Unknown;
  std::optional<int> year_built;
  std::optional<double> surface_m2;
};

/// OLS of daily consumption on temperature over complete days colder than
/// `threshold_c`. Zero covariance gives slope 0 and correlation 0.
inline SlopeReport cold_slope(const HouseholdSeries& series, double threshold_c = kColdThresholdC) {
  SlopeReport r;
  r.household_id = series.meta.household_id;
  r.heating_type = series.meta.heating_type;
  r.year_built = series.meta.year_built;
  r.surface_m2 = series.meta.surface_m2;

  std::vector<const DailyObservation*> cold;
  for (const auto& d : series.days)
    if (d.complete && d.temp_c < threshold_c) cold.push_back(&d);
  // Date order is irrelevant to the result; sort by value so sums do not depend on row order.
  std::sort(cold.begin(), cold.end(), [](const auto* a, const auto* b) {
    return a->temp_c < b->temp_c || (a->temp_c == b->temp_c && a->consumption_kwh < b->consumption_kwh);
  });
  r.n_cold_days = cold.size();
  if (cold.size() < 2) throw Error(ErrorCode::InsufficientColdDays, "fewer than two cold days");

  const double n = static_cast<double>(cold.size());
  double mt = 0.0, mc = 0.0;
  for (const auto* d : cold) {
    mt += d->temp_c;
    mc += d->consumption_kwh;
  }
  mt /= n;
  mc /= n;
  double stt = 0.0, scc = 0.0, stc = 0.0;
  for (const auto* d : cold) {
    stt += (d->temp_c - mt) * (d->temp_c - mt);
    scc += (d->consumption_kwh - mc) * (d->consumption_kwh - mc);
    stc += (d->temp_c - mt) * (d->consumption_kwh - mc);
  }
  if (!(stt > 0.0)) throw Error(ErrorCode::InsufficientColdDays, "cold-day temperatures are constant");
  r.slope = stc / stt;
  r.intercept = mc - r.slope * mt;
  r.correlation = scc > 0.0 ? std::clamp(stc / std::sqrt(stt * scc), -1.0, 1.0) : 0.0;
  if (cold.size() > 2) {
    double sse = 0.0;
    for (const auto* d : cold) {
      const double e = d->consumption_kwh - (r.intercept + r.slope * d->temp_c);
      sse += e * e;
    }
    r.slope_stderr = std::sqrt(sse / (n - 2.0) / stt);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

/// P(K > x) for the limiting Kolmogorov distribution.
inline double kolmogorov_survival(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 1.0) {
    // Jacobi-theta form converges fast for small x.
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double cdf = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double odd = 2.0 * k - 1.0;
      const double term = std::exp(-odd * odd * pi2 / (8.0 * x * x));
      cdf += term;
      if (term < 1e-17 * cdf) break;
    }
    cdf *= std::sqrt(2.0 * std::numbers::pi) / x;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double q = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    q += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(q, 0.0, 1.0);
}

/// One-sample statistic sup |F_n - F| of a sorted sample.
template <typename Cdf>
double ks_statistic(std::span<const double> sorted, Cdf&& cdf) {
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

inline double normal_cdf(double x, double mean, double sd) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

struct KsReport {
  std::string household_id;
  std::size_t n = 0;
  std::size_t n_excluded_nonpositive = 0;
  double ks_stat_normal = 0.0, p_normal = 1.0;
  double ks_stat_lognormal = 0.0, p_lognormal = 1.0;
  bool reject_normal = false, reject_lognormal = false;
};

inline constexpr std::size_t kMinKsSample = 20;

namespace detail {

struct KsBranch {
  double stat = 0.0;
  double p = 1.0;
};

/// Fits (mean, sd) by maximum likelihood and tests against that Normal.
inline KsBranch ks_fitted_normal(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0)) return {1.0, 0.0};
  KsBranch b;
  b.stat = ks_statistic(values, [&](double x) { return normal_cdf(x, mean, sd); });
  b.p = kolmogorov_survival(std::sqrt(n) * b.stat);
  return b;
}

}  // namespace detail

/// Asymptotic p-values ignore that parameters were estimated from the same
/// sample, which makes both tests conservative.
inline KsReport ks_normal_vs_lognormal(std::span<const double> sample, double alpha = 0.05) {
  if (sample.size() < kMinKsSample) throw Error(ErrorCode::TooSmallSample, "KS test needs at least 20 values");
  KsReport r;
  r.n = sample.size();
  std::vector<double> logs;
  for (double v : sample) {
    if (v > 0.0)
      logs.push_back(std::log(v));
    else
      ++r.n_excluded_nonpositive;
  }
  if (logs.empty()) throw Error(ErrorCode::AllNonPositive, "no positive values for the log-normal branch");
  if (logs.size() < kMinKsSample)
    throw Error(ErrorCode::TooSmallSample, "fewer than 20 positive values for the log-normal branch");

  const auto normal = detail::ks_fitted_normal(std::vector<double>(sample.begin(), sample.end()));
  const auto lognormal = detail::ks_fitted_normal(std::move(logs));
  r.ks_stat_normal = normal.stat;
  r.p_normal = normal.p;
  r.ks_stat_lognormal = lognormal.stat;
  r.p_lognormal = lognormal.p;
  r.reject_normal = r.p_normal < alpha;
  r.reject_lognormal = r.p_lognormal < alpha;
  return r;
}

/// KS comparison on a household's complete-day consumption.
inline KsReport ks_normal_vs_lognormal(const HouseholdSeries& series, double alpha = 0.05) {
  std::vector<double> c;
  for (const auto& d : series.days)
    if (d.complete) c.push_back(d.consumption_kwh);
  auto r = ks_normal_vs_lognormal(c, alpha);
  r.household_id = series.meta.household_id;
  return r;
}

// ---------------------------------------------------------------------------
// Histograms

enum class GroupBy { HeatingType, BuiltBefore1990 };

inline std::string category_of(const SlopeReport& r, GroupBy g) {
  if (g == GroupBy::HeatingType) return std::string(to_string(r.heating_type));
  if (!r.year_built) return "unknown";
  return *r.year_built < 1990 ? "before_1990" : "after_1990";
}

struct HistogramBin {
  std::string category;
  double bin_low = 0.0;
  double bin_high = 0.0;
  std::size_t count = 0;
};

struct CategoryStats {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // sample std, 0 for n < 2
};

struct HistogramTable {
  std::vector<HistogramBin> bins;  // sorted by category, then bin_low
  std::map<std::string, CategoryStats> stats;
};

/// Bins are [k w, (k+1) w) for integer k, so they are aligned at zero.
inline HistogramTable category_histogram(std::span<const SlopeReport> reports, GroupBy group_by, double bin_width) {
  if (reports.empty()) throw Error(ErrorCode::InvalidArgument, "no slope reports");
  if (!(bin_width > 0.0)) throw Error(ErrorCode::InvalidArgument, "bin width must be positive");
  std::map<std::string, std::map<long long, std::size_t>> counts;
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : reports) {
    const auto cat = category_of(r, group_by);
    ++counts[cat][static_cast<long long>(std::floor(r.slope / bin_width))];
    values[cat].push_back(r.slope);
  }
  HistogramTable table;
  for (const auto& [cat, bins] : counts) {
    for (const auto& [k, n] : bins)
      table.bins.push_back({cat, static_cast<double>(k) * bin_width, static_cast<double>(k + 1) * bin_width, n});
    const auto& v = values[cat];
    CategoryStats s;
    s.n = v.size();
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(s.n);
    if (s.n > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - s.mean) * (x - s.mean);
      s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    table.stats[cat] = s;
  }
  return table;
}

// ---------------------------------------------------------------------------
// CSV output

inline void write_slopes_csv(std::ostream& out, std::span<const SlopeReport> reports) {
  out << "household_id,n_cold_days,slope_kwh_per_c,slope_stderr,intercept_kwh,correlation,heating_type,year_built,"
         "surface_m2\n";
  char buf[256];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, ",%zu,%.6f,%.6f,%.6f,%.6f,", r.n_cold_days, r.slope, r.slope_stderr, r.intercept,
                  r.correlation);
    out << r.household_id << buf << to_string(r.heating_type) << ',';
    if (r.year_built) out << *r.year_built;
    out << ',';
    if (r.surface_m2) {
      std::snprintf(buf, sizeof buf, "%.1f", *r.surface_m2);
      out << buf;
    }
    out << '\n';
  }
}

inline void write_ks_csv(std::ostream& out, std::span<const KsReport> reports) {
  out << "household_id,n,n_excluded_nonpositive,ks_stat_normal,p_normal,ks_stat_lognormal,p_lognormal,reject_normal,"
         "reject_lognormal\n";
  char buf[256];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, ",%zu,%zu,%.6f,%.6g,%.6f,%.6g,%d,%d\n", r.n, r.n_excluded_nonpositive,
                  r.ks_stat_normal, r.p_normal, r.ks_stat_lognormal, r.p_lognormal, r.reject_normal ? 1 : 0,
                  r.reject_lognormal ? 1 : 0);
    out << r.household_id << buf;
  }
}

inline void write_histogram_csv(std::ostream& out, const HistogramTable& table) {
  out << "category,bin_low,bin_high,count\n";
  char buf[128];
  for (const auto& b : table.bins) {
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%zu\n", b.bin_low, b.bin_high, b.count);
    out << b.category << buf;
  }
}

}  // namespace heatdisagg
