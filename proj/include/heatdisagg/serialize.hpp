#pragma once

// JSON documents for fits and parameter sets, plus atomic file output.

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "heatdisagg/error.hpp"
#include "heatdisagg/infer.hpp"
#include "heatdisagg/model.hpp"
#include "heatdisagg/preprocess.hpp"

namespace heatdisagg {

using Json = nlohmann::ordered_json;

inline constexpr int kFitFormatVersion = 1;

// ---------------------------------------------------------------------------
// Field converters (found by argument-dependent lookup)

inline void to_json(Json& j, const Support& s) { j = Json{{"low", s.low}, {"high", s.high}}; }
inline void from_json(const Json& j, Support& s) {
  s.low = j.at("low").get<double>();
  s.high = j.at("high").get<double>();
}

inline void to_json(Json& j, const ModelSupport& s) { j = Json{{"threshold", s.threshold}, {"slope", s.slope}}; }
inline void from_json(const Json& j, ModelSupport& s) {
  s.threshold = j.at("threshold").get<Support>();
  s.slope = j.at("slope").get<Support>();
}

inline void to_json(Json& j, const ScalingParams& s) {
  j = Json{{"c_mean", s.c_mean}, {"c_std", s.c_std}, {"t_scale", s.t_scale}};
}
inline void from_json(const Json& j, ScalingParams& s) {
  s.c_mean = j.at("c_mean").get<double>();
  s.c_std = j.at("c_std").get<double>();
  s.t_scale = j.at("t_scale").get<double>();
}

inline void to_json(Json& j, const ModelPriors& p) {
  j = Json{{"alpha_T", p.alpha_T},         {"b_loc", p.b_loc},         {"b_scale", p.b_scale},
           {"w_R_loc", p.w_R_loc},         {"w_R_scale", p.w_R_scale}, {"alpha_s", p.alpha_s},
           {"alpha_omega", p.alpha_omega}, {"slope_support", p.slope_support}};
}
inline void from_json(const Json& j, ModelPriors& p) {
  p.alpha_T = j.at("alpha_T").get<std::vector<double>>();
  p.b_loc = j.at("b_loc").get<double>();
  p.b_scale = j.at("b_scale").get<double>();
  p.w_R_loc = j.at("w_R_loc").get<double>();
  p.w_R_scale = j.at("w_R_scale").get<double>();
  p.alpha_s = j.at("alpha_s").get<std::vector<double>>();
  p.alpha_omega = j.at("alpha_omega").get<std::vector<double>>();
  p.slope_support = j.at("slope_support").get<Support>();
}

inline void to_json(Json& j, const FitConfig& c) {
  j = Json{{"n_steps", c.n_steps},
           {"n_mc_samples", c.n_mc_samples},
           {"learning_rate", c.learning_rate},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"seed", c.seed},
           {"convergence_window", c.convergence_window},
           {"convergence_tol", c.convergence_tol},
           {"summary_samples", c.summary_samples}};
}
inline void from_json(const Json& j, FitConfig& c) {
  c.n_steps = j.at("n_steps").get<int>();
  c.n_mc_samples = j.at("n_mc_samples").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.convergence_window = j.at("convergence_window").get<int>();
  c.convergence_tol = j.at("convergence_tol").get<double>();
  c.summary_samples = j.at("summary_samples").get<int>();
}

inline void to_json(Json& j, const NormalFactor& f) { j = Json{{"loc", f.loc}, {"scale", f.scale}}; }
inline void from_json(const Json& j, NormalFactor& f) {
  f.loc = j.at("loc").get<std::vector<double>>();
  f.scale = j.at("scale").get<std::vector<double>>();
  if (f.loc.size() != f.scale.size()) throw Error(ErrorCode::FormatError, "loc and scale differ in length");
}

inline void to_json(Json& j, const GuidePosterior& g) {
  j = Json{{"threshold_logits", g.threshold_logits},
           {"b", g.b},
           {"w_R", g.w_R},
           {"weight_logits", g.weight_logits},
           {"omega_concentration", g.omega_concentration},
           {"log_sigma_left", g.log_sigma_left},
           {"log_sigma_R", g.log_sigma_R},
           {"support", g.support}};
}
inline void from_json(const Json& j, GuidePosterior& g) {
  g.threshold_logits = j.at("threshold_logits").get<NormalFactor>();
  g.b = j.at("b").get<NormalFactor>();
  g.w_R = j.at("w_R").get<NormalFactor>();
  g.weight_logits = j.at("weight_logits").get<NormalFactor>();
  g.omega_concentration = j.at("omega_concentration").get<std::vector<double>>();
  g.log_sigma_left = j.at("log_sigma_left").get<std::vector<double>>();
  g.log_sigma_R = j.at("log_sigma_R").get<double>();
  g.support = j.at("support").get<ModelSupport>();
  const std::size_t M = g.omega_concentration.size();
  if (g.weight_logits.loc.size() != M || g.log_sigma_left.size() != M || g.b.loc.size() != 1 ||
      g.w_R.loc.size() != 1 || g.threshold_logits.loc.empty())
    throw Error(ErrorCode::FormatError, "inconsistent guide dimensions");
}

inline void to_json(Json& j, const Stat& s) { j = Json{{"mean", s.mean}, {"std", s.std}}; }
inline void from_json(const Json& j, Stat& s) {
  s.mean = j.at("mean").get<double>();
  s.std = j.at("std").get<double>();
}

inline void to_json(Json& j, const PosteriorSummary& s) {
  j = Json{{"thresholds", s.thresholds}, {"b", s.b},         {"w_R", s.w_R},
           {"w_left", s.w_left},         {"b_left", s.b_left}, {"omega", s.omega},
           {"sigma_left", s.sigma_left}, {"sigma_R", s.sigma_R}, {"n_samples", s.n_samples}};
}
inline void from_json(const Json& j, PosteriorSummary& s) {
  s.thresholds = j.at("thresholds").get<std::vector<Stat>>();
  s.b = j.at("b").get<Stat>();
  s.w_R = j.at("w_R").get<Stat>();
  s.w_left = j.at("w_left").get<std::vector<Stat>>();
  s.b_left = j.at("b_left").get<std::vector<Stat>>();
  s.omega = j.at("omega").get<std::vector<Stat>>();
  s.sigma_left = j.at("sigma_left").get<std::vector<double>>();
  s.sigma_R = j.at("sigma_R").get<double>();
  s.n_samples = j.at("n_samples").get<std::size_t>();
}

// ---------------------------------------------------------------------------
// Model parameters

inline Json scaled_params_json(const ModelParams& p) {
  return Json{{"thresholds", p.thresholds}, {"b", p.b},           {"w_R", p.w_R},
              {"w_left", p.w_left},         {"b_left", p.b_left}, {"omega", p.omega},
              {"sigma_left", p.sigma_left}, {"sigma_R", p.sigma_R}};
}

/// Parameters in kWh, degC and kWh/degC under `s`.
inline Json physical_params_json(const ModelParams& p, const ScalingParams& s) {
  std::vector<double> thresholds_c, w_left, b_left, sigma_left;
  for (double t : p.thresholds) thresholds_c.push_back(invert_scaling(t, s, ScaleKind::Temperature));
  for (std::size_t m = 0; m < p.M(); ++m) {
    w_left.push_back(slope_to_physical(p.w_left[m], s));
    b_left.push_back(invert_scaling(p.b_left[m], s, ScaleKind::Consumption));
    sigma_left.push_back(p.sigma_left[m] * s.c_std);
  }
  return Json{{"thresholds_c", thresholds_c},
              {"b_kwh", invert_scaling(p.b, s, ScaleKind::Consumption)},
              {"w_R_kwh_per_c", slope_to_physical(p.w_R, s)},
              {"w_left_kwh_per_c", w_left},
              {"b_left_kwh", b_left},
              {"omega", p.omega},
              {"sigma_left_kwh", sigma_left},
              {"sigma_R_kwh", p.sigma_R * s.c_std}};
}

inline Json model_params_json(const ModelParams& p, const ScalingParams& s) {
  return Json{{"scaling", s}, {"scaled", scaled_params_json(p)}, {"physical", physical_params_json(p, s)}};
}

/// Reads the scaled block; biases are re-derived so continuity holds exactly.
inline ModelParams model_params_from_json(const Json& j) {
  try {
    const Json& s = j.contains("scaled") ? j.at("scaled") : j;
    auto p = make_params(s.at("thresholds").get<std::vector<double>>(), s.at("b").get<double>(),
                         s.at("w_R").get<double>(), s.at("w_left").get<std::vector<double>>(),
                         s.at("omega").get<std::vector<double>>(), s.at("sigma_left").get<std::vector<double>>(),
                         s.at("sigma_R").get<double>());
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, e.what());
  }
}

// ---------------------------------------------------------------------------
// Fit results

inline Json fit_to_json(const FitResult& f) {
  std::vector<std::string> labels;
  for (auto l : f.state_labels) labels.emplace_back(to_string(l));
  return Json{{"format_version", kFitFormatVersion},
              {"household_id", f.household_id},
              {"seed", f.config.seed},
              {"config", f.config},
              {"priors", f.priors},
              {"scaling", f.scaling},
              {"guide", f.guide},
              {"converged", f.converged},
              {"n_observations", f.n_observations},
              {"coldest_t", f.coldest_t},
              {"state_labels", labels},
              {"summary", f.summary},
              {"summary_physical", f.summary_physical},
              {"point_params", model_params_json(f.point_params(), f.scaling)},
              {"elbo_trace", f.elbo_trace}};
}

inline FitResult fit_from_json(const Json& j) {
  try {
    if (j.at("format_version").get<int>() != kFitFormatVersion)
      throw Error(ErrorCode::FormatError, "unsupported fit format version");
    FitResult f;
    f.household_id = j.at("household_id").get<std::string>();
    f.config = j.at("config").get<FitConfig>();
    f.priors = j.at("priors").get<ModelPriors>();
    f.scaling = j.at("scaling").get<ScalingParams>();
    f.guide = j.at("guide").get<GuidePosterior>();
    f.converged = j.at("converged").get<bool>();
    f.n_observations = j.at("n_observations").get<std::size_t>();
    f.coldest_t = j.at("coldest_t").get<double>();
    for (const auto& l : j.at("state_labels")) {
      const auto s = l.get<std::string>();
      if (s == "home")
        f.state_labels.push_back(StateLabel::Home);
      else if (s == "away")
        f.state_labels.push_back(StateLabel::Away);
      else
        throw Error(ErrorCode::FormatError, "unknown state label '" + s + "'");
    }
    f.summary = j.at("summary").get<PosteriorSummary>();
    f.summary_physical = j.at("summary_physical").get<PosteriorSummary>();
    f.elbo_trace = j.at("elbo_trace").get<std::vector<double>>();
    if (f.state_labels.size() != f.guide.M() || f.summary.w_left.size() != f.guide.M() ||
        f.summary.thresholds.size() != f.guide.K())
      throw Error(ErrorCode::FormatError, "inconsistent fit dimensions");
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, e.what());
  }
}

// ---------------------------------------------------------------------------
// Files

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

inline Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, e.what());
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file, then renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline void save_fit(const std::filesystem::path& path, const FitResult& f) {
  write_file_atomic(path, dump_json(fit_to_json(f)));
}

inline FitResult load_fit(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFit, "no fit file " + path.string());
  return fit_from_json(parse_json(read_text_file(path)));
}

}  // namespace heatdisagg
