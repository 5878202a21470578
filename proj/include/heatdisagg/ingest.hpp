#pragma once

// Meter / weather / metadata file ingestion and daily aggregation.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "heatdisagg/error.hpp"
#include "heatdisagg/timeutil.hpp"

namespace heatdisagg {

inline constexpr int kReadingsPerDay = 48;
inline constexpr double kMinPhysicalTempC = -60.0;
inline constexpr double kMaxPhysicalTempC = 60.0;
/// Duplicate weather rows whose temperatures spread more than this (population
/// standard deviation, degC) are discarded instead of averaged.
inline constexpr double kDuplicateTempStdLimit = 0.5;

struct MeterReading {
  Timestamp time;
  std::optional<double> energy_kwh;  // nullopt = marked missing
};

struct RawMeterSeries {
  std::string household_id;
  std::vector<MeterReading> readings;
  std::size_t skipped_rows = 0;
  std::vector<std::string> warnings;
};

struct WeatherReading {
  Timestamp time;
  double temp_c = 0.0;
  std::optional<double> wind_speed;
  std::optional<double> wind_dir;
};

struct WeatherSeries {
  std::string station_id;
  double latitude = 0.0;
  double longitude = 0.0;
  std::vector<WeatherReading> readings;
  std::size_t skipped_rows = 0;
  std::vector<std::string> warnings;
};

enum class HeatingType { Electric, Gas, Other, Unknown };

inline std::string_view to_string(HeatingType h) {
  switch (h) {
    case HeatingType::Electric: return "electric";
    case HeatingType::Gas: return "gas";
    case HeatingType::Other: return "other";
    case HeatingType::Unknown: return "unknown";
  }
  return "unknown";
}

inline HeatingType parse_heating_type(std::string_view s) {
  s = trim(s);
  if (s == "electric") return HeatingType::Electric;
  if (s == "gas") return HeatingType::Gas;
  if (s == "other") return HeatingType::Other;
  return HeatingType::Unknown;
}

struct HouseholdMeta {
  std::string household_id;
  double latitude = 0.0;
  double longitude = 0.0;
  HeatingType heating_type = HeatingType::Unknown;
  std::optional<int> year_built;
  std::optional<double> surface_m2;
};

struct DailyObservation {
  Date date;
  double consumption_kwh = 0.0;
  double temp_c = 0.0;
  bool complete = false;
};

struct HouseholdSeries {
  HouseholdMeta meta;
  std::string station_id;
  std::vector<DailyObservation> days;

  std::size_t complete_days() const {
    return static_cast<std::size_t>(
        std::count_if(days.begin(), days.end(), [](const auto& d) { return d.complete; }));
  }
};

// ---------------------------------------------------------------------------
// Parsing

inline RawMeterSeries parse_meter_csv(std::istream& in, std::string household_id = {}) {
  RawMeterSeries series;
  series.household_id = std::move(household_id);

  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 2 || fields[0] != "timestamp" || fields[1] != "energy_kwh")
      throw Error(ErrorCode::FormatError, "meter header must be 'timestamp,energy_kwh'");
    have_header = true;
    break;
  }
  if (!have_header) throw Error(ErrorCode::EmptyFile, "meter file has no header");

  std::unordered_set<std::int64_t> seen;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 2) {
      ++series.skipped_rows;
      continue;
    }
    auto t = parse_timestamp(fields[0]);
    if (!t || t->time_since_epoch().count() % 1800 != 0) {
      ++series.skipped_rows;
      continue;
    }
    std::optional<double> energy;
    if (!fields[1].empty()) {
      energy = parse_double(fields[1]);
      if (!energy || !std::isfinite(*energy) || *energy < 0.0) {
        ++series.skipped_rows;
        continue;
      }
    }
    if (!seen.insert(t->time_since_epoch().count()).second) {
      series.warnings.push_back("duplicate timestamp " + format_timestamp(*t) +
                                " ignored (first kept)");
      continue;
    }
    series.readings.push_back({*t, energy});
  }
  if (series.readings.empty()) throw Error(ErrorCode::EmptyFile, "meter file has no valid rows");
  std::stable_sort(series.readings.begin(), series.readings.end(),
                   [](const auto& a, const auto& b) { return a.time < b.time; });
  return series;
}

inline WeatherSeries parse_weather_csv(std::istream& in) {
  WeatherSeries series;
  std::string line;

  bool have_preamble = false;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 4 || fields[0] != "#station")
      throw Error(ErrorCode::FormatError, "weather file must start with '#station,<id>,<lat>,<lon>'");
    auto lat = parse_double(fields[2]);
    auto lon = parse_double(fields[3]);
    if (fields[1].empty() || !lat || !lon)
      throw Error(ErrorCode::FormatError, "bad station preamble");
    series.station_id = std::string(fields[1]);
    series.latitude = *lat;
    series.longitude = *lon;
    have_preamble = true;
    break;
  }
  if (!have_preamble) throw Error(ErrorCode::EmptyFile, "weather file is empty");

  bool have_header = false;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 4 || fields[0] != "timestamp" || fields[1] != "temp_c" ||
        fields[2] != "wind_speed" || fields[3] != "wind_dir")
      throw Error(ErrorCode::FormatError,
                  "weather header must be 'timestamp,temp_c,wind_speed,wind_dir'");
    have_header = true;
    break;
  }
  if (!have_header) throw Error(ErrorCode::EmptyFile, "weather file has no header");

  // Rows grouped per timestamp so duplicates can be reconciled.
  std::map<Timestamp, std::vector<WeatherReading>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      ++series.skipped_rows;
      continue;
    }
    auto t = parse_timestamp(fields[0]);
    if (!t) {
      ++series.skipped_rows;
      continue;
    }
    if (fields[1].empty()) continue;  // empty entry
    auto temp = parse_double(fields[1]);
    if (!temp || *temp < kMinPhysicalTempC || *temp > kMaxPhysicalTempC) {
      ++series.skipped_rows;
      continue;
    }
    WeatherReading r{*t, *temp, parse_double(fields[2]), parse_double(fields[3])};
    rows[*t].push_back(r);
  }

  for (auto& [t, group] : rows) {
    if (group.size() == 1) {
      series.readings.push_back(group.front());
      continue;
    }
    double mean = 0.0;
    for (const auto& r : group) mean += r.temp_c;
    mean /= static_cast<double>(group.size());
    double var = 0.0;
    for (const auto& r : group) var += (r.temp_c - mean) * (r.temp_c - mean);
    double sd = std::sqrt(var / static_cast<double>(group.size()));
    if (sd > kDuplicateTempStdLimit) {
      series.warnings.push_back("conflicting duplicates at " + format_timestamp(t) + " discarded");
      continue;
    }
    WeatherReading merged{t, mean, std::nullopt, std::nullopt};
    auto average_optional = [&](auto member) -> std::optional<double> {
      double sum = 0.0;
      int n = 0;
      for (const auto& r : group) {
        if (r.*member) {
          sum += *(r.*member);
          ++n;
        }
      }
      if (n == 0) return std::nullopt;
      return sum / n;
    };
    merged.wind_speed = average_optional(&WeatherReading::wind_speed);
    merged.wind_dir = average_optional(&WeatherReading::wind_dir);
    series.readings.push_back(merged);
  }
  if (series.readings.empty()) throw Error(ErrorCode::EmptyFile, "weather file has no valid rows");
  return series;
}

inline std::vector<HouseholdMeta> parse_metadata_csv(std::istream& in) {
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 6 || f[0] != "household_id" || f[1] != "lat" || f[2] != "lon" ||
        f[3] != "heating_type" || f[4] != "year_built" || f[5] != "surface_m2")
      throw Error(ErrorCode::FormatError,
                  "metadata header must be 'household_id,lat,lon,heating_type,year_built,surface_m2'");
    have_header = true;
    break;
  }
  if (!have_header) throw Error(ErrorCode::EmptyFile, "metadata file is empty");

  std::vector<HouseholdMeta> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 6 || f[0].empty()) throw Error(ErrorCode::FormatError, "bad metadata row: " + line);
    auto lat = parse_double(f[1]);
    auto lon = parse_double(f[2]);
    if (!lat || !lon) throw Error(ErrorCode::FormatError, "bad coordinates: " + line);
    HouseholdMeta m;
    m.household_id = std::string(f[0]);
    m.latitude = *lat;
    m.longitude = *lon;
    m.heating_type = parse_heating_type(f[3]);
    if (!f[4].empty()) {
      auto y = parse_double(f[4]);
      if (!y || *y < 1800 || *y > 2100) throw Error(ErrorCode::FormatError, "bad year_built: " + line);
      m.year_built = static_cast<int>(*y);
    }
    if (!f[5].empty()) {
      auto s = parse_double(f[5]);
      if (!s || *s <= 0) throw Error(ErrorCode::FormatError, "bad surface_m2: " + line);
      m.surface_m2 = *s;
    }
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Writers (used by the simulator and for round-trips)

inline void write_meter_csv(std::ostream& out, const RawMeterSeries& series) {
  out << "timestamp,energy_kwh\n";
  char buf[64];
  for (const auto& r : series.readings) {
    out << format_timestamp(r.time) << ',';
    if (r.energy_kwh) {
      std::snprintf(buf, sizeof buf, "%.6f", *r.energy_kwh);
      out << buf;
    }
    out << '\n';
  }
}

inline void write_weather_csv(std::ostream& out, const WeatherSeries& series) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f", series.latitude, series.longitude);
  out << "#station," << series.station_id << ',' << buf << '\n';
  out << "timestamp,temp_c,wind_speed,wind_dir\n";
  for (const auto& r : series.readings) {
    std::snprintf(buf, sizeof buf, "%.3f", r.temp_c);
    out << format_timestamp(r.time) << ',' << buf << ',';
    if (r.wind_speed) {
      std::snprintf(buf, sizeof buf, "%.2f", *r.wind_speed);
      out << buf;
    }
    out << ',';
    if (r.wind_dir) {
      std::snprintf(buf, sizeof buf, "%.1f", *r.wind_dir);
      out << buf;
    }
    out << '\n';
  }
}

inline void write_metadata_csv(std::ostream& out, std::span<const HouseholdMeta> metas) {
  out << "household_id,lat,lon,heating_type,year_built,surface_m2\n";
  char buf[64];
  for (const auto& m : metas) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", m.latitude, m.longitude);
    out << m.household_id << ',' << buf << ',' << to_string(m.heating_type) << ',';
    if (m.year_built) out << *m.year_built;
    out << ',';
    if (m.surface_m2) {
      std::snprintf(buf, sizeof buf, "%.1f", *m.surface_m2);
      out << buf;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Station matching

inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusKm = 6371.0088;
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * kDeg;
  const double dlon = (lon2 - lon1) * kDeg;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * kDeg) * std::cos(lat2 * kDeg) * std::sin(dlon / 2) *
                       std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

/// Closest station by great-circle distance; ties go to the smallest id.
inline std::string nearest_station(double lat, double lon, std::span<const WeatherSeries> stations) {
  if (stations.empty()) throw Error(ErrorCode::NoStations, "no weather stations");
  const WeatherSeries* best = nullptr;
  double best_d = 0.0;
  for (const auto& s : stations) {
    double d = haversine_km(lat, lon, s.latitude, s.longitude);
    if (!best || d < best_d || (d == best_d && s.station_id < best->station_id)) {
      best = &s;
      best_d = d;
    }
  }
  return best->station_id;
}

// ---------------------------------------------------------------------------
// Daily aggregation

/// Aggregates half-hour meter readings and hourly temperatures to UTC days.
/// Hours without a temperature reading are filled with the station's global
/// mean before the daily average is taken. Meter gaps are not imputed.
inline HouseholdSeries merge_daily(const RawMeterSeries& meter, const WeatherSeries& weather,
                                   const HouseholdMeta& meta) {
  if (meter.readings.empty()) throw Error(ErrorCode::EmptyFile, "no meter readings");
  if (weather.readings.empty()) throw Error(ErrorCode::EmptyFile, "no weather readings");

  // Sorted copies make every floating-point sum independent of input order.
  auto by_time = [](const auto& a, const auto& b) { return a.time < b.time; };
  std::vector<MeterReading> meter_rows = meter.readings;
  std::stable_sort(meter_rows.begin(), meter_rows.end(), by_time);
  std::vector<WeatherReading> weather_rows = weather.readings;
  std::stable_sort(weather_rows.begin(), weather_rows.end(), [](const auto& a, const auto& b) {
    return a.time < b.time || (a.time == b.time && a.temp_c < b.temp_c);
  });

  if (day_of(meter_rows.back().time) < day_of(weather_rows.front().time) ||
      day_of(weather_rows.back().time) < day_of(meter_rows.front().time))
    throw Error(ErrorCode::NoOverlap, "meter and weather date ranges are disjoint");

  struct DayAccum {
    double energy = 0.0;
    int count = 0;
  };
  std::map<Date, DayAccum> days;
  for (const auto& r : meter_rows) {
    if (!r.energy_kwh) continue;
    auto& acc = days[day_of(r.time)];
    acc.energy += *r.energy_kwh;
    ++acc.count;
  }

  double global_mean = 0.0;
  for (const auto& r : weather_rows) global_mean += r.temp_c;
  global_mean /= static_cast<double>(weather_rows.size());

  // Hourly buckets: several readings within one hour are averaged.
  std::map<Timestamp, std::pair<double, int>> hourly;
  for (const auto& r : weather_rows) {
    auto& slot = hourly[std::chrono::floor<std::chrono::hours>(r.time)];
    slot.first += r.temp_c;
    ++slot.second;
  }

  HouseholdSeries out;
  out.meta = meta;
  out.station_id = weather.station_id;
  out.days.reserve(days.size());
  for (const auto& [date, acc] : days) {
    double temp_sum = 0.0;
    for (int h = 0; h < 24; ++h) {
      auto it = hourly.find(Timestamp{date} + std::chrono::hours{h});
      temp_sum += it == hourly.end() ? global_mean : it->second.first / it->second.second;
    }
    out.days.push_back({date, acc.energy, temp_sum / 24.0, acc.count == kReadingsPerDay});
  }
  return out;
}

inline std::vector<HouseholdSeries> filter_reference(std::vector<HouseholdSeries> households,
                                                     std::size_t min_complete_days = 180) {
  std::erase_if(households,
                [&](const auto& h) { return h.complete_days() < min_complete_days; });
  return households;
}

}  // namespace heatdisagg
