#pragma once

// On-disk dataset layout and synthetic cohort generation.
//
//   <dir>/households.csv
//   <dir>/meters/<household_id>.csv
//   <dir>/weather/<station_id>.csv
//   <dir>/truth.json            (synthetic cohorts only)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "heatdisagg/error.hpp"
#include "heatdisagg/ingest.hpp"
#include "heatdisagg/model.hpp"
#include "heatdisagg/serialize.hpp"

namespace heatdisagg {

namespace fs = std::filesystem;

struct LoadFailure {
  std::string household_id;
  std::string message;
};

struct Dataset {
  std::vector<HouseholdSeries> households;  // sorted by id
  std::vector<LoadFailure> failures;
};

inline std::vector<WeatherSeries> load_stations(const fs::path& dir) {
  std::vector<WeatherSeries> stations;
  const auto weather_dir = dir / "weather";
  if (!fs::is_directory(weather_dir)) return stations;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(weather_dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + f.string());
    stations.push_back(parse_weather_csv(in));
  }
  return stations;
}

inline std::vector<HouseholdMeta> load_metadata(const fs::path& dir) {
  const auto path = dir / "households.csv";
  if (!fs::exists(path)) return {};
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return parse_metadata_csv(in);
}

/// Reads every household listed in households.csv and joins it with its
/// nearest station. Per-household problems are collected, not thrown.
inline Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  auto metas = load_metadata(dir);
  std::sort(metas.begin(), metas.end(),
            [](const auto& a, const auto& b) { return a.household_id < b.household_id; });
  if (metas.empty()) return ds;
  const auto stations = load_stations(dir);
  for (const auto& meta : metas) {
    try {
      const auto station_id = nearest_station(meta.latitude, meta.longitude, stations);
      const auto& station = *std::find_if(stations.begin(), stations.end(),
                                          [&](const auto& s) { return s.station_id == station_id; });
      const auto path = dir / "meters" / (meta.household_id + ".csv");
      std::ifstream in(path);
      if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
      const auto meter = parse_meter_csv(in, meta.household_id);
      ds.households.push_back(merge_daily(meter, station, meta));
    } catch (const Error& e) {
      ds.failures.push_back({meta.household_id, e.what()});
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic cohorts

struct CohortOptions {
  int n_households = 20;
  int n_days = 365;
  Date start = Date{std::chrono::year{2019} / std::chrono::July / 1};
  double gas_fraction = 0.5;
  std::uint64_t seed = 0;
};

struct CohortMember {
  SyntheticHousehold sim;
  RawMeterSeries meter;
  WeatherSeries weather;
};

/// Seed of household `index`; independent of the cohort size.
inline std::uint64_t member_seed(std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  return rng();
}

/// Share of the daily total consumed in half-hour slot `slot`.
inline double diurnal_share(int slot) {
  static const std::vector<double> shares = [] {
    std::vector<double> w(kReadingsPerDay);
    double total = 0.0;
    for (int s = 0; s < kReadingsPerDay; ++s) {
      const double hour = s / 2.0;
      w[s] = 1.0 + 0.5 * std::exp(-0.5 * std::pow((hour - 8.0) / 1.5, 2)) +
             0.8 * std::exp(-0.5 * std::pow((hour - 19.5) / 2.0, 2));
      total += w[s];
    }
    for (auto& x : w) x /= total;
    return w;
  }();
  return shares[static_cast<std::size_t>(slot)];
}

/// Hourly temperatures averaging exactly to the daily mean and staying inside
/// [min_c, max_c] when the mean does.
inline double hourly_temperature(double daily_mean_c, int hour, double min_c, double max_c) {
  const double amplitude = std::max(0.0, std::min({3.0, daily_mean_c - min_c, max_c - daily_mean_c}));
  return daily_mean_c + amplitude * std::sin(2.0 * std::numbers::pi * (hour - 9) / 24.0);
}

/// Electric households get a strong cold response; gas households a weak one.
inline CohortMember simulate_member(int index, bool gas, const CohortOptions& opts,
                                    const TemperatureProfile& profile = {}) {
  const std::uint64_t seed = member_seed(opts.seed, index);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  char id[32];
  std::snprintf(id, sizeof id, "H%03d", index);
  HouseholdMeta meta;
  meta.household_id = id;
  meta.latitude = 43.0 + 0.5 * (index / 10) + 0.2 * (u(rng) - 0.5);
  meta.longitude = -1.0 + 0.5 * (index % 10) + 0.2 * (u(rng) - 0.5);
  meta.heating_type = gas ? HeatingType::Gas : HeatingType::Electric;
  meta.year_built = 1950 + static_cast<int>(u(rng) * 70.0);
  meta.surface_m2 = std::round(40.0 + 110.0 * u(rng));

  const double t_c = (13.0 + 4.0 * u(rng)) / 30.0;
  ModelParams params;
  ScalingParams truth_scaling;
  if (gas) {
    params = make_params({t_c}, 0.0, 0.0, {-0.15 - 0.1 * u(rng), -0.05}, {0.6, 0.4}, {0.15, 0.15}, 0.15);
    truth_scaling = {8.0 + 4.0 * u(rng), 2.0 + u(rng), 30.0};
  } else {
    params = make_params({t_c}, 0.0, 0.0, {-1.5 - u(rng), -0.5}, {0.6, 0.4}, {0.1, 0.1}, 0.1);
    truth_scaling = {18.0 + 10.0 * u(rng), 5.0 + 4.0 * u(rng), 30.0};
  }

  CohortMember out;
  out.sim = simulate(params, opts.n_days, profile, seed, truth_scaling, opts.start, meta);

  char sid[32];
  std::snprintf(sid, sizeof sid, "ST%03d", index);
  out.sim.series.station_id = sid;
  out.weather.station_id = sid;
  out.weather.latitude = meta.latitude + 0.01;
  out.weather.longitude = meta.longitude + 0.01;
  out.meter.household_id = meta.household_id;
  for (const auto& day : out.sim.series.days) {
    const Timestamp midnight{day.date};
    const double kwh = std::max(0.0, day.consumption_kwh);
    for (int s = 0; s < kReadingsPerDay; ++s)
      out.meter.readings.push_back({midnight + std::chrono::minutes{30 * s}, kwh * diurnal_share(s)});
    for (int h = 0; h < 24; ++h)
      out.weather.readings.push_back({midnight + std::chrono::hours{h},
                                      hourly_temperature(day.temp_c, h, profile.min_c, profile.max_c),
                                      std::nullopt, std::nullopt});
  }
  return out;
}

/// Gas households take the last round(gas_fraction * n) indices.
inline std::vector<CohortMember> simulate_cohort(const CohortOptions& opts, const TemperatureProfile& profile = {}) {
  if (opts.n_households < 1) throw Error(ErrorCode::InvalidArgument, "n_households must be >= 1");
  if (!(opts.gas_fraction >= 0.0 && opts.gas_fraction <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "gas_fraction must lie in [0, 1]");
  const int n_gas = static_cast<int>(std::lround(opts.gas_fraction * opts.n_households));
  std::vector<CohortMember> out;
  for (int i = 0; i < opts.n_households; ++i)
    out.push_back(simulate_member(i, i >= opts.n_households - n_gas, opts, profile));
  return out;
}

inline Json truth_json(std::span<const CohortMember> cohort, const CohortOptions& opts) {
  Json households = Json::array();
  for (const auto& m : cohort) {
    std::vector<std::string> dates;
    for (const auto& d : m.sim.series.days) dates.push_back(format_date(d.date));
    households.push_back(Json{{"household_id", m.sim.series.meta.household_id},
                              {"station_id", m.weather.station_id},
                              {"heating_type", to_string(m.sim.series.meta.heating_type)},
                              {"params", model_params_json(m.sim.truth, m.sim.truth_scaling)},
                              {"dates", dates},
                              {"states", m.sim.states},
                              {"heating_kwh", m.sim.heating_truth_kwh}});
  }
  return Json{{"seed", opts.seed},
              {"n_households", opts.n_households},
              {"n_days", opts.n_days},
              {"start_date", format_date(opts.start)},
              {"gas_fraction", opts.gas_fraction},
              {"households", households}};
}

inline void write_dataset(const fs::path& dir, std::span<const CohortMember> cohort, const CohortOptions& opts) {
  fs::create_directories(dir / "meters");
  fs::create_directories(dir / "weather");
  std::vector<HouseholdMeta> metas;
  for (const auto& m : cohort) {
    metas.push_back(m.sim.series.meta);
    std::ostringstream meter, weather;
    write_meter_csv(meter, m.meter);
    write_weather_csv(weather, m.weather);
    write_file_atomic(dir / "meters" / (m.meter.household_id + ".csv"), meter.str());
    write_file_atomic(dir / "weather" / (m.weather.station_id + ".csv"), weather.str());
  }
  std::ostringstream meta;
  write_metadata_csv(meta, metas);
  write_file_atomic(dir / "households.csv", meta.str());
  write_file_atomic(dir / "truth.json", dump_json(truth_json(cohort, opts)));
}

}  // namespace heatdisagg
