// Command-line front end: simulate, fit, disaggregate, analyze, validate, plot.
//
// Exit codes: 0 success, 1 usage or input error, 2 partial failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "heatdisagg/analyze.hpp"
#include "heatdisagg/config.hpp"
#include "heatdisagg/dataset.hpp"
#include "heatdisagg/disagg.hpp"
#include "heatdisagg/infer.hpp"
#include "heatdisagg/serialize.hpp"
#include "heatdisagg/svg.hpp"
#include "heatdisagg/validate.hpp"

namespace fs = std::filesystem;
using namespace heatdisagg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitPartial = 2;

std::mutex stderr_mutex;

void report(const std::string& who, const std::string& what) {
  std::lock_guard lock(stderr_mutex);
  std::cerr << who << ": " << what << '\n';
}

fs::path fit_path(const RunConfig& cfg, const std::string& id) {
  return fs::path(cfg.fit_dir ? *cfg.fit_dir : cfg.out_dir) / (id + ".fit.json");
}

/// Loads the input directory; exits with "no households" when nothing loads.
std::optional<Dataset> load_or_complain(const RunConfig& cfg, int& status) {
  Dataset ds = load_dataset(cfg.input_dir);
  for (const auto& f : ds.failures) report(f.household_id, f.message);
  if (ds.households.empty()) {
    std::cerr << "no households\n";
    status = kExitInput;
    return std::nullopt;
  }
  if (!ds.failures.empty()) status = kExitPartial;
  return ds;
}

int cmd_simulate(const RunConfig& cfg) {
  CohortOptions opts = cfg.simulate;
  opts.seed = cfg.seed;
  const auto cohort = simulate_cohort(opts);
  write_dataset(cfg.out_dir, cohort, opts);
  return kExitOk;
}

int cmd_fit(const RunConfig& cfg) {
  int status = kExitOk;
  auto ds = load_or_complain(cfg, status);
  if (!ds) return status;
  fs::create_directories(cfg.out_dir);
  std::vector<int> outcome(ds->households.size(), kExitOk);
  parallel_for(ds->households.size(), cfg.jobs, [&](std::size_t i) {
    const auto& h = ds->households[i];
    try {
      if (h.complete_days() < cfg.min_complete_days)
        throw Error(ErrorCode::TooFewObservations,
                    std::to_string(h.complete_days()) + " complete days, need " + std::to_string(cfg.min_complete_days));
      const auto result = fit(h, cfg.priors, cfg.fit);
      save_fit(fs::path(cfg.out_dir) / (h.meta.household_id + ".fit.json"), result);
      if (!result.converged) report(h.meta.household_id, "warning: windowed ELBO change above convergence_tol");
    } catch (const Error& e) {
      report(h.meta.household_id, e.what());
      outcome[i] = kExitPartial;
    }
  });
  for (int o : outcome) status = std::max(status, o);
  return status;
}

int cmd_disaggregate(const RunConfig& cfg) {
  int status = kExitOk;
  auto ds = load_or_complain(cfg, status);
  if (!ds) return status;
  std::vector<FitResult> fits;
  for (const auto& h : ds->households) {
    try {
      fits.push_back(load_fit(fit_path(cfg, h.meta.household_id)));
    } catch (const Error& e) {
      report(h.meta.household_id, e.what());
      return kExitInput;
    }
  }
  fs::create_directories(cfg.out_dir);
  for (std::size_t i = 0; i < ds->households.size(); ++i) {
    const auto& h = ds->households[i];
    try {
      const auto rows = disaggregate_series(h, fits[i]);
      std::ostringstream out;
      write_disagg_csv(out, rows);
      write_file_atomic(fs::path(cfg.out_dir) / (h.meta.household_id + ".disagg.csv"), out.str());
    } catch (const Error& e) {
      report(h.meta.household_id, e.what());
      status = kExitPartial;
    }
  }
  return status;
}

int cmd_analyze(const RunConfig& cfg) {
  int status = kExitOk;
  auto ds = load_or_complain(cfg, status);
  if (!ds) return status;
  std::vector<SlopeReport> slopes;
  std::vector<KsReport> ks;
  for (const auto& h : ds->households) {
    try {
      slopes.push_back(cold_slope(h, cfg.analyze.cold_threshold_c));
    } catch (const Error& e) {
      report(h.meta.household_id, e.what());
      status = kExitPartial;
    }
    try {
      ks.push_back(ks_normal_vs_lognormal(h, cfg.analyze.alpha));
    } catch (const Error& e) {
      report(h.meta.household_id, e.what());
      status = kExitPartial;
    }
  }
  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  std::ostringstream s, k;
  write_slopes_csv(s, slopes);
  write_ks_csv(k, ks);
  write_file_atomic(out / "slopes.csv", s.str());
  write_file_atomic(out / "ks.csv", k.str());
  if (!slopes.empty()) {
    std::ostringstream hist;
    write_histogram_csv(hist, category_histogram(slopes, cfg.analyze.group_by, cfg.analyze.bin_width));
    write_file_atomic(out / "histogram.csv", hist.str());
  }
  return status;
}

int cmd_validate(const RunConfig& cfg) {
  int status = kExitOk;
  auto ds = load_or_complain(cfg, status);
  if (!ds) return status;
  ValidationReport report_;
  try {
    report_ = validate_cohort(ds->households, cfg.priors, cfg.fit, cfg.validate, cfg.jobs);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return kExitPartial;
  }
  for (const auto& f : report_.failures) {
    report(f.household_id, f.message);
    status = kExitPartial;
  }
  fs::create_directories(cfg.out_dir);
  std::ostringstream csv;
  write_validation_csv(csv, report_);
  write_file_atomic(fs::path(cfg.out_dir) / "validation.csv", csv.str());
  write_file_atomic(fs::path(cfg.out_dir) / "validation_summary.json", dump_json(validation_summary_json(report_)));
  return status;
}

int cmd_plot(const RunConfig& cfg) {
  int status = kExitOk;
  auto ds = load_or_complain(cfg, status);
  if (!ds) return status;
  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  std::vector<SlopeReport> slopes;
  for (const auto& h : ds->households) {
    const auto& id = h.meta.household_id;
    std::optional<FitResult> fit_result;
    if (fs::exists(fit_path(cfg, id))) {
      try {
        fit_result = load_fit(fit_path(cfg, id));
      } catch (const Error& e) {
        report(id, e.what());
        status = kExitPartial;
      }
    }

    svg::ScatterSpec spec;
    spec.title = "Household " + id;
    double t_min = 1e300, t_max = -1e300;
    for (const auto& d : h.days) {
      if (!d.complete) continue;
      spec.points.push_back({d.temp_c, d.consumption_kwh});
      t_min = std::min(t_min, d.temp_c);
      t_max = std::max(t_max, d.temp_c);
    }
    if (fit_result && !spec.points.empty()) {
      spec.lines = svg::branch_segments(fit_result->point_params(), fit_result->scaling, t_min, t_max);
      const auto tc = fit_result->summary_physical.t_c();
      spec.band = Support{tc.mean - 2 * tc.std, tc.mean + 2 * tc.std};
    }
    write_file_atomic(out / ("scatter_" + id + ".svg"), svg::scatter(spec));

    try {
      slopes.push_back(cold_slope(h, cfg.analyze.cold_threshold_c));
    } catch (const Error&) {
    }

    if (!fit_result) continue;
    const auto& sp = fit_result->summary_physical;
    std::vector<svg::DensityCurve> slope_curves;
    for (std::size_t m = 0; m < sp.w_left.size(); ++m)
      slope_curves.push_back({"w_" + std::to_string(m + 1) + " (" + std::string(to_string(fit_result->state_labels[m])) + ")",
                              sp.w_left[m]});
    slope_curves.push_back({"w_R", sp.w_R});
    write_file_atomic(out / ("posterior_slopes_" + id + ".svg"),
                      svg::densities(slope_curves, "Posterior slopes " + id, "kWh/C"));
    const std::vector<svg::DensityCurve> tc_curve{{"T_c", sp.t_c()}};
    write_file_atomic(out / ("posterior_threshold_" + id + ".svg"),
                      svg::densities(tc_curve, "Posterior critical temperature " + id, "C"));

    try {
      const auto rows = disaggregate_series(h, *fit_result);
      std::vector<Date> dates;
      svg::Series total{"total", {}}, heating{"heating", {}}, temp{"temperature", {}};
      for (const auto& r : rows) {
        dates.push_back(r.date);
        total.values.push_back(r.c_tot_kwh);
        heating.values.push_back(r.heating_mean_clipped_kwh);
        temp.values.push_back(r.temp_c);
      }
      if (cfg.plot.moving_average) {
        for (auto* s : {&total, &heating, &temp}) {
          s->values = moving_average(dates, s->values, cfg.plot.window);
          s->label += " (" + std::to_string(cfg.plot.window) + "-day mean)";
        }
      }
      const std::vector<svg::Series> energy{total, heating};
      write_file_atomic(out / ("timeseries_" + id + ".svg"),
                        svg::timeseries(dates, energy, "Consumption and heating " + id, "kWh"));
      write_file_atomic(out / ("temperature_" + id + ".svg"),
                        svg::timeseries(dates, std::vector<svg::Series>{temp}, "Temperature " + id, "C"));
    } catch (const Error& e) {
      report(id, e.what());
      status = kExitPartial;
    }
  }
  if (!slopes.empty())
    write_file_atomic(out / "histogram.svg",
                      svg::histogram(category_histogram(slopes, cfg.analyze.group_by, cfg.analyze.bin_width)));
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Electrical heating disaggregation from daily consumption and temperature"};
  app.require_subcommand(1);

  std::string input_dir, out_dir, config_path, fit_dir;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  auto* o_input = app.add_option("--input-dir", input_dir, "Dataset directory");
  auto* o_out = app.add_option("--out-dir", out_dir, "Output directory");
  auto* o_seed = app.add_option("--seed", seed, "Random seed (default 0)");
  auto* o_jobs = app.add_option("--jobs", jobs, "Parallel households")->check(CLI::PositiveNumber);
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  for (auto* o : {o_input, o_out, o_seed, o_jobs}) o->configurable(false);

  auto* sim = app.add_subcommand("simulate", "Write a synthetic cohort");
  int n_households = 20, n_days = 365;
  double gas_fraction = 0.5;
  std::string start_date;
  auto* o_nh = sim->add_option("--n-households", n_households)->check(CLI::PositiveNumber);
  auto* o_nd = sim->add_option("--n-days", n_days)->check(CLI::PositiveNumber);
  auto* o_sd = sim->add_option("--start-date", start_date, "YYYY-MM-DD");
  auto* o_gf = sim->add_option("--gas-fraction", gas_fraction)->check(CLI::Range(0.0, 1.0));

  auto* fit_cmd = app.add_subcommand("fit", "Fit every household");
  auto* dis = app.add_subcommand("disaggregate", "Per-day heating estimates from existing fits");
  auto* ana = app.add_subcommand("analyze", "Cold slopes, histograms and KS tests");
  auto* val = app.add_subcommand("validate", "Temporal A/B validation");
  auto* plot = app.add_subcommand("plot", "Static SVG figures");
  bool moving_average = false;
  int window = 7;
  auto* o_ma = plot->add_flag("--moving-average", moving_average, "Smooth time series");
  auto* o_win = plot->add_option("--window", window)->check(CLI::PositiveNumber);
  for (auto* sub : {dis, plot}) sub->add_option("--fit-dir", fit_dir, "Directory with .fit.json files");
  for (auto* sub : {sim, fit_cmd, dis, ana, val, plot}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInput;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = parse_run_config(parse_json(read_text_file(config_path)));
    if (o_input->count()) cfg.input_dir = input_dir;
    if (o_out->count()) cfg.out_dir = out_dir;
    if (o_seed->count()) cfg.seed = seed;
    if (o_jobs->count()) cfg.jobs = jobs;
    if (!fit_dir.empty()) cfg.fit_dir = fit_dir;
    if (o_nh->count()) cfg.simulate.n_households = n_households;
    if (o_nd->count()) cfg.simulate.n_days = n_days;
    if (o_gf->count()) cfg.simulate.gas_fraction = gas_fraction;
    if (o_sd->count()) {
      const auto d = parse_date(start_date);
      if (!d) throw Error(ErrorCode::InvalidArgument, "bad --start-date '" + start_date + "'");
      cfg.simulate.start = *d;
    }
    if (o_ma->count()) cfg.plot.moving_average = moving_average;
    if (o_win->count()) cfg.plot.window = window;
    cfg.fit.seed = cfg.seed;

    if (sim->parsed()) return cmd_simulate(cfg);
    if (fit_cmd->parsed()) return cmd_fit(cfg);
    if (dis->parsed()) return cmd_disaggregate(cfg);
    if (ana->parsed()) return cmd_analyze(cfg);
    if (val->parsed()) return cmd_validate(cfg);
    if (plot->parsed()) return cmd_plot(cfg);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
