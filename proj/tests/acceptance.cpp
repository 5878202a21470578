// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.
// Pass criterion numbers as arguments to run a subset.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "heatdisagg/analyze.hpp"
#include "heatdisagg/dataset.hpp"
#include "heatdisagg/disagg.hpp"
#include "heatdisagg/infer.hpp"
#include "heatdisagg/model.hpp"
#include "heatdisagg/serialize.hpp"
#include "heatdisagg/validate.hpp"

using namespace heatdisagg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared reference suite: 20 households, one threshold, two left lines.

constexpr int kSuiteSize = 20;
constexpr double kTruthTc = 0.5;                 // scaled, 15 degC
constexpr double kTruthHome = -2.0, kTruthAway = -0.5, kTruthRight = 0.0;
const ScalingParams kTruthScaling{25.0, 8.0, 30.0};

ModelParams suite_truth() {
  return make_params({kTruthTc}, 0.0, kTruthRight, {kTruthHome, kTruthAway}, {0.6, 0.4}, {0.1, 0.1}, 0.1);
}

struct SuiteMember {
  SyntheticHousehold sim;
  FitResult fit;
  double seconds = 0.0;
};

std::vector<SuiteMember>& suite() {
  static std::vector<SuiteMember> members = [] {
    std::vector<SuiteMember> out;
    for (int seed = 0; seed < kSuiteSize; ++seed) {
      HouseholdMeta meta;
      meta.household_id = format("S%02d", seed);
      SuiteMember m;
      m.sim = simulate(suite_truth(), 365, TemperatureProfile{}, static_cast<std::uint64_t>(seed), kTruthScaling,
                       Date{std::chrono::year{2019} / std::chrono::July / 1}, meta);
      const auto t0 = std::chrono::steady_clock::now();
      m.fit = fit(m.sim.series, ModelPriors{}, FitConfig{});
      m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.push_back(std::move(m));
    }
    return out;
  }();
  return members;
}

double physical_slope(double scaled) { return slope_to_physical(scaled, kTruthScaling); }

bool slope_ok(double estimate, double truth, double largest_truth) {
  if (truth == 0.0) return std::abs(estimate) <= 0.15 * largest_truth;
  return std::abs(estimate / truth - 1.0) <= 0.15;
}

// ---------------------------------------------------------------------------

Outcome criterion_1() {
  int ok = 0;
  double slowest = 0.0;
  const double largest = std::abs(physical_slope(kTruthHome));
  for (const auto& m : suite()) {
    const auto& s = m.fit.summary_physical;
    std::size_t home = 0;
    for (std::size_t i = 0; i < m.fit.state_labels.size(); ++i)
      if (m.fit.state_labels[i] == StateLabel::Home) home = i;
    const std::size_t away = 1 - home;
    const bool tc = std::abs(s.t_c().mean - kTruthTc * 30.0) <= 1.0;
    const bool slopes = slope_ok(s.w_left[home].mean, physical_slope(kTruthHome), largest) &&
                        slope_ok(s.w_left[away].mean, physical_slope(kTruthAway), largest) &&
                        slope_ok(s.w_R.mean, physical_slope(kTruthRight), largest);
    ok += tc && slopes;
    slowest = std::max(slowest, m.seconds);
  }
  return {ok >= 18 && slowest <= 60.0,
          format("%d/20 households recovered (need 18), slowest fit %.1f s (limit 60)", ok, slowest)};
}

Outcome criterion_2() {
  double worst = 0.0;
  std::size_t checked = 0;
  auto check = [&](const ModelParams& p) {
    worst = std::max(worst, continuity_residual(p));
    ++checked;
  };
  for (const auto& m : suite()) {
    check(m.sim.truth);
    check(m.fit.point_params());
    // Every posterior draw is a fitted parameter set too.
    const GuideLayout L = layout_of(m.fit.guide);
    const auto theta = pack(m.fit.guide);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i)
      check(reparameterize<double>(theta, L, m.fit.guide.support, draw_noise(rng, L)).params);
  }
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double t = 0.1 + 0.8 * u(rng);
    const double w2 = -0.1 - 3.0 * u(rng);
    const double w1 = w2 - 0.1 - 5.0 * u(rng);
    check(make_params({t}, u(rng) - 0.5, u(rng) - 0.5, {w1, w2}, {0.5, 0.5}, {0.1, 0.1}, 0.1));
  }
  return {worst <= 1e-9, format("max residual %.3g over %zu parameter sets (limit 1e-9)", worst, checked)};
}

double brute_force_log_likelihood(const ModelParams& p, const std::vector<ScaledObservation>& obs) {
  auto log_density = [](double x, double mean, double sigma) {
    const double z = (x - mean) / sigma;
    return -0.5 * z * z - std::log(sigma * std::sqrt(2.0 * std::numbers::pi));
  };
  double log_right = 0.0;
  std::vector<ScaledObservation> left;
  for (const auto& o : obs) {
    if (o.t < p.top_threshold())
      left.push_back(o);
    else
      log_right += log_density(o.c, p.w_R * o.t + p.b, p.sigma_R);
  }
  std::size_t n_assign = 1;
  for (std::size_t i = 0; i < left.size(); ++i) n_assign *= p.M();
  // Log joint of every assignment, combined with a log-sum-exp.
  std::vector<double> log_joint(n_assign, log_right);
  for (std::size_t a = 0; a < n_assign; ++a) {
    std::size_t code = a;
    for (const auto& o : left) {
      const std::size_t m = code % p.M();
      code /= p.M();
      log_joint[a] += std::log(p.omega[m]) + log_density(o.c, p.w_left[m] * o.t + p.b_left[m], p.sigma_left[m]);
    }
  }
  const double top = *std::max_element(log_joint.begin(), log_joint.end());
  double sum = 0.0;
  for (double lj : log_joint) sum += std::exp(lj - top);
  return top + std::log(sum);
}

Outcome criterion_3() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t M = 2 + inst % 2;
    std::vector<double> w(M), omega(M), sigma(M);
    double acc = -0.2, total = 0.0;
    for (std::size_t m = M; m-- > 0;) w[m] = (acc -= 0.2 + 2.0 * u(rng));
    for (auto& o : omega) total += (o = 0.1 + u(rng));
    for (auto& o : omega) o /= total;
    for (auto& s : sigma) s = 0.2 + u(rng);
    const auto p = make_params({0.2 + 0.6 * u(rng)}, u(rng) - 0.5, 0.4 * (u(rng) - 0.5), w, omega, sigma,
                               0.2 + u(rng));
    std::vector<ScaledObservation> obs(1 + inst % 12);
    for (auto& o : obs) o = {4.0 * u(rng) - 2.0, 1.3 * u(rng) - 0.2};
    worst = std::max(worst, std::abs(log_likelihood(p, obs) - brute_force_log_likelihood(p, obs)));
  }
  return {worst <= 1e-10, format("max |difference| %.3g over 200 instances (limit 1e-10)", worst)};
}

Outcome criterion_4() {
  constexpr std::uint64_t kSeed = 4;
  constexpr int kSamples = 4;
  constexpr double kStep = 1e-5;
  const ModelPriors priors;
  const auto source = simulate(suite_truth(), 365, TemperatureProfile{}, kSeed, kTruthScaling);
  GuidePosterior guide = init_guide(priors, source.scaled);
  const GuideLayout L = layout_of(guide);
  const auto theta = pack(guide);

  // The likelihood jumps where an observation crosses a drawn threshold; keep
  // the 20 observations at least 0.02 away from every threshold in the draws.
  std::vector<double> drawn;
  {
    std::mt19937_64 rng(kSeed);
    for (int s = 0; s < kSamples; ++s)
      drawn.push_back(reparameterize<double>(theta, L, guide.support, draw_noise(rng, L)).params.top_threshold());
  }
  std::vector<ScaledObservation> obs;
  for (const auto& o : source.scaled) {
    bool clear = true;
    for (double t : drawn) clear = clear && std::abs(o.t - t) > 0.02;
    if (clear && obs.size() < 20) obs.push_back(o);
  }

  std::mt19937_64 rng(kSeed);
  const auto eg = elbo_with_gradient(theta, L, guide.support, priors, obs, kSamples, rng);
  double worst = 0.0;
  std::size_t worst_index = 0;
  for (std::size_t i : L.normal_indices()) {
    auto tp = theta, tm = theta;
    tp[i] += kStep;
    tm[i] -= kStep;
    const double fd = (elbo_value(tp, L, guide.support, priors, obs, kSamples, kSeed) -
                       elbo_value(tm, L, guide.support, priors, obs, kSamples, kSeed)) /
                      (2.0 * kStep);
    const double rel = std::abs(eg.gradient[i] - fd) / std::max({std::abs(eg.gradient[i]), std::abs(fd), 1e-12});
    if (rel > worst) {
      worst = rel;
      worst_index = i;
    }
  }
  return {obs.size() == 20 && worst <= 1e-4,
          format("%zu observations, %zu Normal coordinates, max relative error %.3g at index %zu (limit 1e-4)",
                 obs.size(), L.normal_indices().size(), worst, worst_index)};
}

Outcome criterion_5() {
  // Days where the two true lines are at least 3 sigma apart: 1.5 (0.5 - t) >= 0.3.
  constexpr double kSeparatedBelow = 0.3;
  std::size_t days = 0, matched = 0;
  for (const auto& m : suite()) {
    const auto obs = scaled_observations(m.sim.series, m.fit.scaling);
    const auto point = m.fit.point_params();
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (!(m.sim.scaled[i].t <= kSeparatedBelow)) continue;
      ++days;
      const auto decoded = decode_state(obs[i], point, m.fit.state_labels);
      const DayState truth = m.sim.states[i] == 0 ? DayState::Home : DayState::Away;
      matched += decoded.state == truth;
    }
  }
  const double rate = static_cast<double>(matched) / static_cast<double>(days);
  return {rate >= 0.95, format("%zu/%zu separated cold days decoded correctly (%.2f%%, need 95%%)", matched, days,
                               100.0 * rate)};
}

Outcome criterion_6() {
  std::vector<HouseholdSeries> households;
  for (const auto& m : suite()) households.push_back(m.sim.series);
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = validate_cohort(households, ModelPriors{}, FitConfig{});
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  return {report.n_households > 0 && report.mean_delta <= 0.25 && minutes <= 45.0,
          format("mean delta %.4f, std %.4f over %zu households, %zu failed, %.1f min (limits 0.25, 45 min)",
                 report.mean_delta, report.std_delta, report.n_households, report.failures.size(), minutes)};
}

Outcome criterion_7() {
  const auto h = heating_moments(1.0, Stat{-1.0, 0.1}, Stat{0.5, 0.05}, Stat{0.2, 0.2});
  const double mean_err = std::abs(h.mean - 1.3), var_err = std::abs(h.variance - 0.045025);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> mean(-10.0, 10.0), sd(0.0, 3.0);
  std::size_t negative = 0;
  for (int i = 0; i < 100000; ++i) {
    const auto r = heating_moments(mean(rng), Stat{mean(rng), sd(rng)}, Stat{mean(rng), sd(rng)},
                                   Stat{mean(rng), sd(rng)});
    negative += r.variance < 0.0;
  }
  return {mean_err <= 1e-12 && var_err <= 1e-12 && negative == 0,
          format("mean error %.3g, variance error %.3g, %zu negative variances in 1e5 draws", mean_err, var_err,
                 negative)};
}

Outcome criterion_8() {
  int ordered = 0, retained = 0, rejected = 0;
  for (int s = 0; s < 200; ++s) {
    std::mt19937_64 rng(8000 + s);
    std::lognormal_distribution<double> ln(3.0, 0.5);
    std::vector<double> x(5000);
    for (auto& v : x) v = ln(rng);
    const auto r = ks_normal_vs_lognormal(x, 0.05);
    retained += !r.reject_lognormal;
    rejected += r.reject_normal;
    ordered += !r.reject_lognormal && r.reject_normal;
  }
  return {ordered >= 190, format("%d/200 samples keep log-normal and reject normal (need 190); "
                                 "log-normal kept %d, normal rejected %d",
                                 ordered, retained, rejected)};
}

Outcome criterion_9() {
  CohortOptions opts;
  opts.n_households = 40;
  opts.n_days = 365;
  opts.gas_fraction = 0.5;
  opts.seed = 9;
  std::vector<double> electric, gas;
  for (const auto& m : simulate_cohort(opts)) {
    const auto r = cold_slope(m.sim.series);
    (m.sim.series.meta.heating_type == HeatingType::Gas ? gas : electric).push_back(r.slope);
  }
  auto mean_se = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))};
  };
  const auto [me, se_e] = mean_se(electric);
  const auto [mg, se_g] = mean_se(gas);
  const double se = std::sqrt(se_e * se_e + se_g * se_g);
  const double gap = (mg - me) / se;
  return {me < 0.0 && gap >= 3.0,
          format("electric mean %.4f (se %.4f), gas mean %.4f (se %.4f) kWh/C, gap %.1f standard errors (need 3)", me,
                 se_e, mg, se_g, gap)};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HEATDISAGG_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text_file(e.path());
  return files;
}

Outcome criterion_10() {
  const fs::path root = fs::temp_directory_path() / ("heatdisagg_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "config.json")
      << R"({"seed": 10, "simulate": {"n_households": 4, "n_days": 365},
             "fit": {"n_steps": 300, "summary_samples": 1000}})";
  const std::string cfg = "--config " + (root / "config.json").string();

  std::vector<std::string> differing;
  std::size_t compared = 0;
  int bad_exit = 0;
  for (int run = 1; run <= 2; ++run) {
    const fs::path r = root / ("run" + std::to_string(run));
    const std::string jobs = " --jobs " + std::to_string(run);
    const auto dir = [&](const char* name) { return (r / name).string(); };
    bad_exit += run_cli(cfg + " --out-dir " + dir("data") + " simulate") != 0;
    bad_exit += run_cli(cfg + jobs + " --input-dir " + dir("data") + " --out-dir " + dir("fits") + " fit") != 0;
    bad_exit += run_cli(cfg + " --input-dir " + dir("data") + " --out-dir " + dir("disagg") + " disaggregate --fit-dir " +
                        dir("fits")) != 0;
    bad_exit += run_cli(cfg + " --input-dir " + dir("data") + " --out-dir " + dir("analyze") + " analyze") != 0;
    bad_exit += run_cli(cfg + jobs + " --input-dir " + dir("data") + " --out-dir " + dir("validate") + " validate") != 0;
    bad_exit += run_cli(cfg + " --input-dir " + dir("data") + " --out-dir " + dir("plot") + " plot --moving-average --fit-dir " +
                        dir("fits")) != 0;
  }
  const auto a = snapshot(root / "run1"), b = snapshot(root / "run2");
  for (const auto& [name, content] : a) {
    ++compared;
    const auto it = b.find(name);
    if (it == b.end() || it->second != content) differing.push_back(name);
  }
  if (a.size() != b.size()) differing.push_back("(file sets differ)");
  fs::remove_all(root);
  std::string detail = format("%zu files compared across two runs (jobs 1 vs 2), %zu differ, %d non-zero exits",
                              compared, differing.size(), bad_exit);
  if (!differing.empty()) detail += "; first: " + differing.front();
  return {differing.empty() && bad_exit == 0 && compared > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"parameter recovery", criterion_1}, {"continuity", criterion_2},       {"likelihood oracle", criterion_3},
      {"gradient check", criterion_4},     {"state decoding", criterion_5},   {"A/B validation", criterion_6},
      {"heating moments", criterion_7},    {"KS reproduction", criterion_8},  {"slope contrast", criterion_9},
      {"CLI determinism", criterion_10}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", number, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
