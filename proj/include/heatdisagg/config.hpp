#pragma once

// Run configuration for the command-line tool. Every JSON object is checked
// against its known keys; anything else is rejected.

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>

#include "heatdisagg/analyze.hpp"
#include "heatdisagg/dataset.hpp"
#include "heatdisagg/error.hpp"
#include "heatdisagg/infer.hpp"
#include "heatdisagg/model.hpp"
#include "heatdisagg/serialize.hpp"
#include "heatdisagg/validate.hpp"

namespace heatdisagg {

struct AnalyzeOptions {
  double cold_threshold_c = kColdThresholdC;
  double bin_width = 0.1;  // kWh/degC
  GroupBy group_by = GroupBy::HeatingType;
  double alpha = 0.05;
};

struct PlotOptions {
  bool moving_average = false;
  int window = 7;
};

struct RunConfig {
  std::string input_dir = ".";
  std::string out_dir = ".";
  std::optional<std::string> fit_dir;  // defaults to out_dir
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::size_t min_complete_days = 180;
  ModelPriors priors;
  FitConfig fit;
  CohortOptions simulate;
  AnalyzeOptions analyze;
  ValidationOptions validate;
  PlotOptions plot;
};

namespace detail {

inline void check_keys(const Json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw Error(ErrorCode::InvalidArgument, "unknown config key '" + std::string(where) + "." + key + "'");
  }
}

template <typename T>
void read_if(const Json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

inline void read_priors(const Json& j, ModelPriors& p) {
  check_keys(j, "priors",
             {"alpha_T", "b_loc", "b_scale", "w_R_loc", "w_R_scale", "alpha_s", "alpha_omega", "slope_support"});
  read_if(j, "alpha_T", p.alpha_T);
  read_if(j, "b_loc", p.b_loc);
  read_if(j, "b_scale", p.b_scale);
  read_if(j, "w_R_loc", p.w_R_loc);
  read_if(j, "w_R_scale", p.w_R_scale);
  read_if(j, "alpha_s", p.alpha_s);
  read_if(j, "alpha_omega", p.alpha_omega);
  if (j.contains("slope_support")) {
    check_keys(j.at("slope_support"), "priors.slope_support", {"low", "high"});
    p.slope_support = j.at("slope_support").get<Support>();
  }
}

inline void read_fit(const Json& j, FitConfig& c) {
  check_keys(j, "fit",
             {"n_steps", "n_mc_samples", "learning_rate", "beta1", "beta2", "convergence_window", "convergence_tol",
              "summary_samples"});
  read_if(j, "n_steps", c.n_steps);
  read_if(j, "n_mc_samples", c.n_mc_samples);
  read_if(j, "learning_rate", c.learning_rate);
  read_if(j, "beta1", c.beta1);
  read_if(j, "beta2", c.beta2);
  read_if(j, "convergence_window", c.convergence_window);
  read_if(j, "convergence_tol", c.convergence_tol);
  read_if(j, "summary_samples", c.summary_samples);
}

inline Date read_date(const Json& j, const char* key) {
  const auto s = j.at(key).get<std::string>();
  const auto d = parse_date(s);
  if (!d) throw Error(ErrorCode::InvalidArgument, std::string(key) + ": bad date '" + s + "'");
  return *d;
}

inline GroupBy parse_group_by(std::string_view s) {
  if (s == "heating_type") return GroupBy::HeatingType;
  if (s == "built_before_1990") return GroupBy::BuiltBefore1990;
  throw Error(ErrorCode::InvalidArgument, "group_by must be heating_type or built_before_1990");
}

}  // namespace detail

/// Applies a JSON document on top of `base`.
inline RunConfig parse_run_config(const Json& j, RunConfig base = {}) {
  using namespace detail;
  try {
    check_keys(j, "config",
               {"input_dir", "out_dir", "fit_dir", "seed", "jobs", "min_complete_days", "priors", "fit", "simulate",
                "analyze", "validate", "plot"});
    read_if(j, "input_dir", base.input_dir);
    read_if(j, "out_dir", base.out_dir);
    if (j.contains("fit_dir")) base.fit_dir = j.at("fit_dir").get<std::string>();
    read_if(j, "seed", base.seed);
    read_if(j, "jobs", base.jobs);
    read_if(j, "min_complete_days", base.min_complete_days);
    if (j.contains("priors")) read_priors(j.at("priors"), base.priors);
    if (j.contains("fit")) read_fit(j.at("fit"), base.fit);
    if (j.contains("simulate")) {
      const auto& s = j.at("simulate");
      check_keys(s, "simulate", {"n_households", "n_days", "start_date", "gas_fraction"});
      read_if(s, "n_households", base.simulate.n_households);
      read_if(s, "n_days", base.simulate.n_days);
      read_if(s, "gas_fraction", base.simulate.gas_fraction);
      if (s.contains("start_date")) base.simulate.start = read_date(s, "start_date");
    }
    if (j.contains("analyze")) {
      const auto& a = j.at("analyze");
      check_keys(a, "analyze", {"cold_threshold_c", "bin_width", "group_by", "alpha"});
      read_if(a, "cold_threshold_c", base.analyze.cold_threshold_c);
      read_if(a, "bin_width", base.analyze.bin_width);
      read_if(a, "alpha", base.analyze.alpha);
      if (a.contains("group_by")) base.analyze.group_by = parse_group_by(a.at("group_by").get<std::string>());
    }
    if (j.contains("validate")) {
      const auto& v = j.at("validate");
      check_keys(v, "validate", {"split_date", "epsilon_kwh", "min_complete_days"});
      read_if(v, "epsilon_kwh", base.validate.epsilon_kwh);
      read_if(v, "min_complete_days", base.validate.min_complete_days);
      if (v.contains("split_date")) base.validate.split_date = read_date(v, "split_date");
    }
    if (j.contains("plot")) {
      const auto& p = j.at("plot");
      check_keys(p, "plot", {"moving_average", "window"});
      read_if(p, "moving_average", base.plot.moving_average);
      read_if(p, "window", base.plot.window);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
  }
  base.priors.validate();
  base.fit.validate();
  return base;
}

}  // namespace heatdisagg
