#pragma once

/*
 * Configuration-driven experiment runner.  One JSON config describes one
 * run: the runner builds the family and schedule, dispatches to the named
 * experiment, writes results.csv (RFC 4180) plus a versioned manifest.json
 * into the output directory, and digests the pass/fail outcome.  Identical
 * (config, seed) pairs produce byte-identical CSVs at any thread count.
 */

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "torusmix/curve.hpp"
#include "torusmix/foliation.hpp"
#include "torusmix/map_family.hpp"
#include "torusmix/observable.hpp"
#include "torusmix/quadrature.hpp"
#include "torusmix/result_table.hpp"
#include "torusmix/stats.hpp"

namespace torusmix {

/* Rejected configuration; the CLI maps this to its usage exit code. */
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {
      "hypotheses",      "lyapunov",       "curve-equidistribution",
      "crossing-split",  "stopping-times", "sigma-tail",
      "proliferation",   "singular-limit", "finite-time-doc",
      "birkhoff",        "clt",            "square-mixing"};
  return kinds;
}

struct ExperimentConfig {
  std::string kind;

  std::string family = "trig";  // "trig" | "linear"
  double linear_slope = 10.0;
  double linear_offset = 0.0;

  std::string schedule = "constant";  // "constant" | "polynomial"
  double coefficient = 1e4;           // constant value, or the polynomial floor
  double power = 0.0;
  double cap = 0.0;  // <= 0: uncapped
  int horizon = 0;   // <= 0: derived from the experiment's time fields

  double eta = 0.75;
  double alpha = 1.0;
  double k1 = 0.0;  // > 0 overrides the measured threshold constant

  std::vector<std::string> observables;

  std::int64_t samples = 10000;  // ensemble size M
  int time_n = 100;              // ensemble time N (or tracking horizon)
  int burn_in = 0;

  std::int64_t budget = 1000000;         // quadrature / splitting node budget
  std::vector<double> coefficient_list;  // L values for scan experiments
  std::vector<int> time_list;            // n values for scan experiments

  double corner_x = 0.45, corner_y = 0.3, side = 1.0;
  double height = 0.25;  // seed height for curve experiments
  bool coboundary_mode = false;
  int stages = 3;  // splitting depth / pushed stage count

  std::string out_dir = ".";
  std::uint64_t seed = 1;
  int threads = 0;
};

namespace detail {

template <typename... Args>
std::string format(const char* fmt, Args... args) {
  char buf[192];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

inline MapFamily build_family(const ExperimentConfig& cfg) {
  if (cfg.family == "trig") return MapFamily::trig_standard();
  if (cfg.family == "linear")
    return MapFamily::linear_test(cfg.linear_slope, cfg.linear_offset);
  throw ConfigError("family.type must be \"trig\" or \"linear\"");
}

inline CoefficientSchedule build_schedule(const ExperimentConfig& cfg) {
  if (cfg.schedule == "constant")
    return CoefficientSchedule::constant(cfg.coefficient);
  if (cfg.schedule == "polynomial")
    return CoefficientSchedule::polynomial(cfg.coefficient, cfg.power, cfg.cap);
  throw ConfigError("schedule.type must be \"constant\" or \"polynomial\"");
}

inline StageSequence::Options sequence_options(const ExperimentConfig& cfg) {
  StageSequence::Options opts;
  if (cfg.k1 > 0.0)
    opts.k1_override = cfg.k1;
  else if (cfg.family == "linear")
    opts.k1_override = 0.05;  // no critical points, so nothing to measure
  return opts;
}

inline StageSequence build_sequence(const ExperimentConfig& cfg,
                                    int derived_horizon) {
  int horizon = cfg.horizon > 0 ? cfg.horizon : derived_horizon;
  return {build_family(cfg), build_schedule(cfg), cfg.eta, horizon,
          sequence_options(cfg)};
}

inline Observable obs_at(const ExperimentConfig& cfg, std::size_t i,
                         const char* fallback) {
  if (i < cfg.observables.size()) return make_observable(cfg.observables[i]);
  return make_observable(fallback);
}

inline SquareRegion build_region(const ExperimentConfig& cfg) {
  if (cfg.side >= 1.0) return SquareRegion::full_torus();
  return SquareRegion::square(cfg.corner_x, cfg.corner_y, cfg.side);
}

inline std::vector<double> coefficient_scan(const ExperimentConfig& cfg,
                                            std::vector<double> fallback) {
  return cfg.coefficient_list.empty() ? std::move(fallback)
                                      : cfg.coefficient_list;
}

inline std::vector<int> time_scan(const ExperimentConfig& cfg,
                                  std::vector<int> fallback) {
  return cfg.time_list.empty() ? std::move(fallback) : cfg.time_list;
}

inline ResultTable run_hypotheses(const ExperimentConfig& cfg) {
  MapFamily fam = build_family(cfg);
  const int expected_roots = cfg.family == "linear" ? 0 : 2;
  ResultTable t;
  for (double L : coefficient_scan(cfg, {cfg.coefficient})) {
    HypothesisReport rep = validate_hypotheses(fam, L);
    std::string params = format("L=%g", L);
    bool stable = !rep.derivative_instability && std::isfinite(rep.k0_hat);
    t.add("hypotheses.k0", params, rep.k0_hat, 0.0, 0.0, 0.0,
          stable && rep.k0_hat > 0.0);
    t.add("hypotheses.m0", params, static_cast<double>(rep.m0_hat), 0.0,
          static_cast<double>(expected_roots), 0.0,
          rep.m0_hat == expected_roots);
    bool k1_ok = cfg.family == "linear" ? rep.k1_hat == 0.0
                                        : stable && rep.k1_hat > 0.0;
    t.add("hypotheses.k1", params, rep.k1_hat, 0.0, 0.0, 0.0, k1_ok);
  }
  return t;
}

inline ResultTable run_lyapunov(const ExperimentConfig& cfg) {
  const int n = cfg.time_n;
  StageSequence seq = build_sequence(cfg, n);
  const std::int64_t M = cfg.samples;
  std::vector<double> lam(static_cast<std::size_t>(M));
  parallel_for(M, cfg.threads, [&](std::int64_t i) {
    StreamRng rng(cfg.seed, static_cast<std::uint64_t>(i));
    TorusPoint p{rng.uniform(), rng.uniform()};
    lam[static_cast<std::size_t>(i)] =
        cocycle_norm_growth([&](int k) { return seq.stage(k); }, p, n).back();
  });
  MeanVar mv = mean_var(lam);
  double shape = 0.0;
  for (int k = 1; k <= n; ++k) shape += std::log(seq.coefficient(k));
  shape /= n;
  ResultTable t;
  t.add("lyapunov",
        format("n=%d;M=%lld;schedule=%s", n, static_cast<long long>(M),
               seq.schedule().describe().c_str()),
        mv.mean, mv.se_mean, shape, mv.mean - shape, mv.mean > 0.0);
  return t;
}

inline ResultTable run_curve_equidistribution(const ExperimentConfig& cfg) {
  Observable psi = obs_at(cfg, 0, "cos_x_plus_y");
  const int gap = cfg.stages;
  const int n_stage = 1 + gap;
  const int strata = static_cast<int>(std::clamp<std::int64_t>(
      cfg.budget / 2, 1, std::numeric_limits<int>::max()));
  std::vector<std::shared_ptr<const StageSequence>> seqs;
  std::vector<std::string> tags;
  if (!cfg.coefficient_list.empty()) {
    for (double L : cfg.coefficient_list) {
      seqs.push_back(std::make_shared<const StageSequence>(
          build_family(cfg), CoefficientSchedule::constant(L), cfg.eta,
          n_stage, sequence_options(cfg)));
      tags.push_back(format("L=%g;n=%d", L, n_stage));
    }
  } else {
    seqs.push_back(
        std::make_shared<const StageSequence>(build_sequence(cfg, n_stage)));
    tags.push_back(format("n=%d;schedule=%s", n_stage,
                          seqs.back()->schedule().describe().c_str()));
  }
  std::vector<EquidistributionReport> reps;
  for (const auto& seq : seqs) {
    HorizontalCurve circle = flat_circle(seq, 1, cfg.height);
    reps.push_back(
        curve_equidistribution_error(circle, psi, n_stage, strata, cfg.seed));
  }
  double c_hat = 0.0;
  for (const EquidistributionReport& r : reps)
    if (r.measured > 3.0 * r.std_error)
      c_hat = std::max(c_hat, r.measured / r.bound_shape);
  ResultTable t;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const EquidistributionReport& r = reps[i];
    bool ok = r.measured <= c_hat * r.bound_shape + 3.0 * r.std_error + 1e-12;
    t.add("curve-equidistribution", tags[i], r.measured, r.std_error,
          c_hat * r.bound_shape, c_hat, ok);
  }
  return t;
}

inline ResultTable run_crossing_split(const ExperimentConfig& cfg) {
  const int k = cfg.stages;
  auto seq = std::make_shared<const StageSequence>(build_sequence(cfg, k));
  HorizontalCurve circle = flat_circle(seq, 1, cfg.height);
  IteratedSplit split = iterate_crossing_split(circle, 1, k, cfg.budget);
  ResultTable t;
  for (std::size_t j = 0; j < split.stage_child_count.size(); ++j)
    t.add("crossing-split.children", format("stage=%d", static_cast<int>(j) + 1),
          static_cast<double>(split.stage_child_count[j]), 0.0, 0.0, 0.0, true);
  t.add("crossing-split.pieces", format("stages=%d", k),
        static_cast<double>(split.stage_child_count.empty()
                                ? 1
                                : split.stage_child_count.back()),
        0.0, 0.0, 0.0, !split.pieces.empty());
  bool excised_ok = cfg.family == "linear" && k == 1
                        ? split.excised_measure <= 1e-9
                        : true;
  t.add("crossing-split.excised", format("stages=%d", k),
        split.excised_measure, 0.0, 0.0, 0.0, excised_ok);
  double ledger_gap =
      split.surviving_measure + split.excised_measure - split.source_measure;
  t.add("crossing-split.mass", format("stages=%d", k), ledger_gap, 0.0, 0.0,
        0.0, !split.excised_exact || std::fabs(ledger_gap) <= 1e-9);
  return t;
}

inline void add_survival_rows(ResultTable* t, const char* id,
                              const SurvivalCurve& curve,
                              const std::string& sched) {
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
    double bound = curve.fitted_c * curve.theoretical_shape[i];
    bool ok = curve.empirical[i] <= bound + 3.0 * curve.std_error[i] + 1e-12;
    t->add(id, format("N=%d;schedule=%s", curve.thresholds[i], sched.c_str()),
           curve.empirical[i], curve.std_error[i], bound, curve.fitted_c, ok);
  }
}

inline ResultTable run_stopping(const ExperimentConfig& cfg, bool sigma_kind) {
  int n_max = cfg.time_list.empty()
                  ? cfg.time_n
                  : *std::max_element(cfg.time_list.begin(), cfg.time_list.end());
  StageSequence seq = build_sequence(cfg, n_max);
  SquareRegion region = build_region(cfg);
  std::vector<StoppingRecord> records = collect_stopping_records(
      seq, region, n_max, cfg.samples, cfg.seed, cfg.threads);
  std::string sched = seq.schedule().describe();
  ResultTable t;
  if (!sigma_kind) {
    add_survival_rows(&t, "stopping-times.tau",
                      survival_tail(records, StopKind::tau, seq), sched);
    add_survival_rows(&t, "stopping-times.tau_bar",
                      survival_tail(records, StopKind::tau_bar, seq), sched);
    std::int64_t violations = 0, usable = 0;
    for (const StoppingRecord& r : records) {
      if (r.sigma.censored) continue;
      ++usable;
      if (!(r.tau.value <= r.tau_bar.value && r.tau_bar.value <= r.sigma.value))
        ++violations;
    }
    t.add("stopping-times.order",
          format("uncensored=%lld", static_cast<long long>(usable)),
          static_cast<double>(violations), 0.0, 0.0, 0.0,
          usable > 0 && violations == 0);
  } else {
    add_survival_rows(&t, "sigma-tail",
                      survival_tail(records, StopKind::sigma, seq), sched);
    std::int64_t held = 0, usable = 0;
    for (const StoppingRecord& r : records) {
      if (r.sigma.censored) continue;
      ++usable;
      if (r.persistence_ok) ++held;
    }
    double frac = usable > 0 ? static_cast<double>(held) /
                                   static_cast<double>(usable)
                             : 0.0;
    t.add("sigma-tail.persistence",
          format("steps=10;uncensored=%lld", static_cast<long long>(usable)),
          frac, 0.0, 1.0, 0.0, usable > 0 && held == usable);
  }
  return t;
}

inline ResultTable run_proliferation(const ExperimentConfig& cfg) {
  std::vector<int> times = time_scan(cfg, {4, 8});
  int n_max = *std::max_element(times.begin(), times.end());
  StageSequence seq = build_sequence(cfg, n_max);
  SquareRegion region = build_region(cfg);
  std::string sched = seq.schedule().describe();
  ResultTable t;
  for (int n : times) {
    ProliferationReport rep =
        proliferated_mass(seq, region, n, cfg.samples, cfg.seed, cfg.threads);
    bool ok = rep.mass >= rep.lower_bound_shape - 3.0 * rep.std_error - 1e-12;
    t.add("proliferation", format("n=%d;schedule=%s", n, sched.c_str()),
          rep.mass, rep.std_error, rep.lower_bound_shape, 0.0, ok);
  }
  return t;
}

inline ResultTable run_singular_limit(const ExperimentConfig& cfg) {
  Observable phi1 = obs_at(cfg, 0, "cos_y");
  Observable phi2 = obs_at(cfg, 1, "cos_x");
  std::vector<double> Ls = coefficient_scan(cfg, {1e3, 1e4, 1e5});
  Observable p1 = markov_apply_P(phi1);
  double chain = integrate_2d([&](double x, double y) {
                   return p1(x, y) * phi2(x, y);
                 }).value;
  double alpha = std::min(phi1.alpha, phi2.alpha);
  double eta = cfg.eta;
  double expo = -std::min(2.0 * eta - 1.0, alpha * (1.0 - eta) / (2.0 + alpha));
  std::vector<double> dev(Ls.size()), se(Ls.size()), shape(Ls.size());
  for (std::size_t i = 0; i < Ls.size(); ++i) {
    StageSequence seq(build_family(cfg), CoefficientSchedule::constant(Ls[i]),
                      eta, 1, sequence_options(cfg));
    CorrelationEstimate est = correlation(
        phi1, phi2, seq, 1, 1, CorrelationMethod::stratified_mc, cfg.budget,
        cfg.seed + i, cfg.threads);
    dev[i] = est.estimate - chain;
    se[i] = est.std_error;
    shape[i] = std::pow(Ls[i], expo);
  }
  double c_hat = 0.0;
  for (std::size_t i = 0; i < Ls.size(); ++i)
    if (std::fabs(dev[i]) > 3.0 * se[i] && shape[i] > 0.0)
      c_hat = std::max(c_hat, std::fabs(dev[i]) / shape[i]);
  ResultTable t;
  for (std::size_t i = 0; i < Ls.size(); ++i) {
    bool ok = std::fabs(dev[i]) <= c_hat * shape[i] + 3.0 * se[i] + 1e-12;
    t.add("singular-limit", format("L=%g;limit=%.6g", Ls[i], chain), dev[i],
          se[i], c_hat * shape[i], c_hat, ok);
  }
  return t;
}

inline ResultTable run_finite_time_doc(const ExperimentConfig& cfg) {
  Observable phi = obs_at(cfg, 0, "cos_x");
  Observable psi = obs_at(cfg, 1, "cos_x");
  std::vector<double> Ls = coefficient_scan(cfg, {1e3, 1e4, 1e5});
  std::vector<int> ns = time_scan(cfg, {2, 3, 4, 5, 6});
  return finite_time_doc_scan(build_family(cfg), cfg.eta, phi, psi, Ls, ns,
                              cfg.budget, cfg.seed, cfg.threads);
}

inline ResultTable run_birkhoff(const ExperimentConfig& cfg) {
  std::vector<int> Ns = time_scan(cfg, {cfg.time_n});
  int horizon = *std::max_element(Ns.begin(), Ns.end());
  StageSequence seq = build_sequence(cfg, horizon);
  Observable phi = obs_at(cfg, 0, "cos_x");
  EnsembleSpec spec;
  spec.samples = cfg.samples;
  spec.burn_in = cfg.burn_in;
  spec.seed = cfg.seed;
  ResultTable t;
  for (int N : Ns) {
    spec.time_n = N;
    t.append(birkhoff_ensemble(phi, seq, spec, cfg.threads));
  }
  return t;
}

inline ResultTable run_clt(const ExperimentConfig& cfg) {
  StageSequence seq = build_sequence(cfg, cfg.time_n);
  Observable phi = obs_at(cfg, 0, "cos_x");
  EnsembleSpec spec;
  spec.samples = cfg.samples;
  spec.time_n = cfg.time_n;
  spec.burn_in = cfg.burn_in;
  spec.seed = cfg.seed;
  return clt_ensemble(phi, seq, spec, cfg.coboundary_mode, cfg.threads);
}

inline ResultTable run_square_mixing(const ExperimentConfig& cfg) {
  std::vector<int> times = time_scan(cfg, {8, 16, 32});
  int horizon = *std::max_element(times.begin(), times.end());
  StageSequence seq = build_sequence(cfg, horizon);
  Observable psi = obs_at(cfg, 0, "cos_x_plus_y");
  return square_mixing(psi, seq, cfg.side, cfg.corner_x, cfg.corner_y, times,
                       cfg.samples, cfg.seed, cfg.threads);
}

}  // namespace detail

inline void validate_config(const ExperimentConfig& cfg) {
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), cfg.kind) == kinds.end()) {
    std::string msg = "unknown experiment kind: " + cfg.kind + " (expected one of";
    for (const std::string& k : kinds) msg += " " + k;
    throw ConfigError(msg + ")");
  }
  if (!(cfg.eta > 0.5 && cfg.eta < 1.0))
    throw ConfigError("eta must lie in (1/2, 1)");
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0))
    throw ConfigError("alpha must lie in (0, 1]");
  try {
    (void)detail::build_family(cfg);
    (void)detail::build_schedule(cfg);
    for (const std::string& id : cfg.observables) (void)make_observable(id);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (cfg.samples < 1) throw ConfigError("samples must be >= 1");
  if (cfg.time_n < 1) throw ConfigError("time must be >= 1");
  if (cfg.budget < 4) throw ConfigError("budget must be >= 4");
  if (cfg.stages < 1) throw ConfigError("stages must be >= 1");
  if (cfg.threads < 0) throw ConfigError("threads must be >= 0");
  if (!(cfg.side > 0.0 && cfg.side <= 1.0))
    throw ConfigError("square side must lie in (0, 1]");
  for (int n : cfg.time_list)
    if (n < 1) throw ConfigError("times entries must be >= 1");
  for (double L : cfg.coefficient_list)
    if (!(L > 0.0)) throw ConfigError("coefficients entries must be positive");
  if (cfg.out_dir.empty()) throw ConfigError("out must be a directory path");
}

struct RunResult {
  ExperimentConfig config;
  ResultTable table;
  double wall_seconds = 0.0;
};

inline RunResult run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  auto t0 = std::chrono::steady_clock::now();
  RunResult out;
  out.config = cfg;
  const std::string& k = cfg.kind;
  if (k == "hypotheses")
    out.table = detail::run_hypotheses(cfg);
  else if (k == "lyapunov")
    out.table = detail::run_lyapunov(cfg);
  else if (k == "curve-equidistribution")
    out.table = detail::run_curve_equidistribution(cfg);
  else if (k == "crossing-split")
    out.table = detail::run_crossing_split(cfg);
  else if (k == "stopping-times")
    out.table = detail::run_stopping(cfg, false);
  else if (k == "sigma-tail")
    out.table = detail::run_stopping(cfg, true);
  else if (k == "proliferation")
    out.table = detail::run_proliferation(cfg);
  else if (k == "singular-limit")
    out.table = detail::run_singular_limit(cfg);
  else if (k == "finite-time-doc")
    out.table = detail::run_finite_time_doc(cfg);
  else if (k == "birkhoff")
    out.table = detail::run_birkhoff(cfg);
  else if (k == "clt")
    out.table = detail::run_clt(cfg);
  else
    out.table = detail::run_square_mixing(cfg);
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return out;
}

/* -------- JSON configuration -------- */

namespace detail {

inline const nlohmann::json* sub(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return nullptr;
  const nlohmann::json& v = j.at(key);
  if (!v.is_object())
    throw ConfigError(std::string("config field ") + key + " must be an object");
  return &v;
}

inline void read_num(const nlohmann::json& j, const char* key, double* out,
                     const char* scope = "") {
  if (!j.contains(key)) return;
  const nlohmann::json& v = j.at(key);
  if (!v.is_number())
    throw ConfigError(std::string("config field ") + scope + key +
                      " must be a number");
  *out = v.get<double>();
}

inline void read_int(const nlohmann::json& j, const char* key, int* out,
                     const char* scope = "") {
  if (!j.contains(key)) return;
  const nlohmann::json& v = j.at(key);
  if (!v.is_number_integer())
    throw ConfigError(std::string("config field ") + scope + key +
                      " must be an integer");
  *out = v.get<int>();
}

inline void read_i64(const nlohmann::json& j, const char* key,
                     std::int64_t* out, const char* scope = "") {
  if (!j.contains(key)) return;
  const nlohmann::json& v = j.at(key);
  if (!v.is_number_integer())
    throw ConfigError(std::string("config field ") + scope + key +
                      " must be an integer");
  *out = v.get<std::int64_t>();
}

inline void read_u64(const nlohmann::json& j, const char* key,
                     std::uint64_t* out) {
  if (!j.contains(key)) return;
  const nlohmann::json& v = j.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<double>() < 0))
    throw ConfigError(std::string("config field ") + key +
                      " must be a nonnegative integer");
  *out = v.get<std::uint64_t>();
}

inline void read_bool(const nlohmann::json& j, const char* key, bool* out) {
  if (!j.contains(key)) return;
  const nlohmann::json& v = j.at(key);
  if (!v.is_boolean())
    throw ConfigError(std::string("config field ") + key + " must be a boolean");
  *out = v.get<bool>();
}

inline void read_str(const nlohmann::json& j, const char* key,
                     std::string* out, const char* scope = "") {
  if (!j.contains(key)) return;
  const nlohmann::json& v = j.at(key);
  if (!v.is_string())
    throw ConfigError(std::string("config field ") + scope + key +
                      " must be a string");
  *out = v.get<std::string>();
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  static const std::set<std::string> known = {
      "experiment", "family",  "schedule",        "eta",
      "alpha",      "k1",      "observables",     "ensemble",
      "budget",     "coefficients", "times",      "square",
      "height",     "coboundary_mode", "stages",  "out",
      "seed",       "threads"};
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      throw ConfigError("unknown config field: " + item.key());

  ExperimentConfig cfg;
  if (!j.contains("experiment"))
    throw ConfigError("config field experiment is required");
  detail::read_str(j, "experiment", &cfg.kind);

  if (j.contains("family")) {
    if (j.at("family").is_string()) {
      cfg.family = j.at("family").get<std::string>();
    } else if (const nlohmann::json* f = detail::sub(j, "family")) {
      detail::read_str(*f, "type", &cfg.family, "family.");
      detail::read_num(*f, "slope", &cfg.linear_slope, "family.");
      detail::read_num(*f, "offset", &cfg.linear_offset, "family.");
    }
  }
  if (const nlohmann::json* s = detail::sub(j, "schedule")) {
    detail::read_str(*s, "type", &cfg.schedule, "schedule.");
    detail::read_num(*s, "L", &cfg.coefficient, "schedule.");
    detail::read_num(*s, "L0", &cfg.coefficient, "schedule.");
    detail::read_num(*s, "power", &cfg.power, "schedule.");
    detail::read_num(*s, "cap", &cfg.cap, "schedule.");
    detail::read_int(*s, "horizon", &cfg.horizon, "schedule.");
  }
  detail::read_num(j, "eta", &cfg.eta);
  detail::read_num(j, "alpha", &cfg.alpha);
  detail::read_num(j, "k1", &cfg.k1);
  if (j.contains("observables")) {
    const nlohmann::json& o = j.at("observables");
    if (!o.is_array())
      throw ConfigError("config field observables must be an array of strings");
    for (const auto& v : o) {
      if (!v.is_string())
        throw ConfigError("config field observables must be an array of strings");
      cfg.observables.push_back(v.get<std::string>());
    }
  }
  if (const nlohmann::json* e = detail::sub(j, "ensemble")) {
    detail::read_i64(*e, "samples", &cfg.samples, "ensemble.");
    detail::read_int(*e, "time", &cfg.time_n, "ensemble.");
    detail::read_int(*e, "burn_in", &cfg.burn_in, "ensemble.");
  }
  detail::read_i64(j, "budget", &cfg.budget);
  if (j.contains("coefficients")) {
    const nlohmann::json& c = j.at("coefficients");
    if (!c.is_array())
      throw ConfigError("config field coefficients must be an array of numbers");
    for (const auto& v : c) {
      if (!v.is_number())
        throw ConfigError("config field coefficients must be an array of numbers");
      cfg.coefficient_list.push_back(v.get<double>());
    }
  }
  if (j.contains("times")) {
    const nlohmann::json& c = j.at("times");
    if (!c.is_array())
      throw ConfigError("config field times must be an array of integers");
    for (const auto& v : c) {
      if (!v.is_number_integer())
        throw ConfigError("config field times must be an array of integers");
      cfg.time_list.push_back(v.get<int>());
    }
  }
  if (const nlohmann::json* s = detail::sub(j, "square")) {
    detail::read_num(*s, "corner_x", &cfg.corner_x, "square.");
    detail::read_num(*s, "corner_y", &cfg.corner_y, "square.");
    detail::read_num(*s, "side", &cfg.side, "square.");
  }
  detail::read_num(j, "height", &cfg.height);
  detail::read_bool(j, "coboundary_mode", &cfg.coboundary_mode);
  detail::read_int(j, "stages", &cfg.stages);
  detail::read_str(j, "out", &cfg.out_dir);
  detail::read_u64(j, "seed", &cfg.seed);
  detail::read_int(j, "threads", &cfg.threads);
  validate_config(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["experiment"] = cfg.kind;
  nlohmann::json fam;
  fam["type"] = cfg.family;
  if (cfg.family == "linear") {
    fam["slope"] = cfg.linear_slope;
    fam["offset"] = cfg.linear_offset;
  }
  j["family"] = fam;
  nlohmann::json sched;
  sched["type"] = cfg.schedule;
  if (cfg.schedule == "constant") {
    sched["L"] = cfg.coefficient;
  } else {
    sched["L0"] = cfg.coefficient;
    sched["power"] = cfg.power;
    sched["cap"] = cfg.cap;
  }
  sched["horizon"] = cfg.horizon;
  j["schedule"] = sched;
  j["eta"] = cfg.eta;
  j["alpha"] = cfg.alpha;
  if (cfg.k1 > 0.0) j["k1"] = cfg.k1;
  j["observables"] = cfg.observables;
  j["ensemble"] = {{"samples", cfg.samples},
                   {"time", cfg.time_n},
                   {"burn_in", cfg.burn_in}};
  j["budget"] = cfg.budget;
  if (!cfg.coefficient_list.empty()) j["coefficients"] = cfg.coefficient_list;
  if (!cfg.time_list.empty()) j["times"] = cfg.time_list;
  j["square"] = {{"corner_x", cfg.corner_x},
                 {"corner_y", cfg.corner_y},
                 {"side", cfg.side}};
  j["height"] = cfg.height;
  j["coboundary_mode"] = cfg.coboundary_mode;
  j["stages"] = cfg.stages;
  j["out"] = cfg.out_dir;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  return j;
}

/* -------- Artifacts -------- */

inline void write_artifacts(const RunResult& run) {
  namespace fs = std::filesystem;
  fs::path dir(run.config.out_dir);
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "results.csv", std::ios::binary);
    csv << run.table.to_csv();
    if (!csv)
      throw std::runtime_error("cannot write " + (dir / "results.csv").string());
  }
  std::int64_t passed = 0;
  for (const ResultRow& r : run.table.rows) passed += r.pass ? 1 : 0;
  nlohmann::json fitted = nlohmann::json::object();
  for (const ResultRow& r : run.table.rows)
    if (r.fitted_c != 0.0) fitted[r.experiment] = r.fitted_c;
  nlohmann::json man;
  man["schema_version"] = 1;
  man["experiment"] = run.config.kind;
  man["config"] = config_to_json(run.config);
  man["seed"] = run.config.seed;
  man["threads"] = run.config.threads;
  man["rows"] = run.table.rows.size();
  man["passed"] = passed;
  man["failed"] = static_cast<std::int64_t>(run.table.rows.size()) - passed;
  man["all_pass"] = run.table.all_pass();
  man["fitted_constants"] = fitted;
  man["wall_seconds"] = run.wall_seconds;
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << man.dump(2) << '\n';
  if (!out)
    throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
}

namespace detail {

/* RFC 4180 reader for the tables this runner writes. */
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
    } else {
      field += c;
    }
  }
  if (!field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

inline std::string emit_report(const std::string& dir) {
  namespace fs = std::filesystem;
  fs::path csv_path = fs::path(dir) / "results.csv";
  fs::path man_path = fs::path(dir) / "manifest.json";
  for (const fs::path& p : {csv_path, man_path})
    if (!fs::exists(p))
      throw std::runtime_error("missing run artifacts: " + p.string());
  nlohmann::json man;
  {
    std::ifstream in(man_path, std::ios::binary);
    try {
      in >> man;
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(std::string("unreadable manifest: ") + e.what());
    }
  }
  std::string text;
  {
    std::ifstream in(csv_path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  std::vector<std::vector<std::string>> rows = detail::parse_csv(text);
  std::ostringstream out;
  std::string experiment = man.value("experiment", std::string("?"));
  double wall = man.value("wall_seconds", 0.0);
  if (rows.size() <= 1) {
    out << experiment << ": no rows (empty result table)\n";
    return out.str();
  }
  std::int64_t total = 0, passed = 0;
  std::vector<std::size_t> failing;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 7) continue;
    ++total;
    if (rows[i][6] == "true")
      ++passed;
    else
      failing.push_back(i);
  }
  if (failing.empty()) {
    out << "PASS " << passed << "/" << total << " (" << experiment << ", "
        << detail::format("%.2f", wall) << " s)\n";
  } else {
    out << "FAIL " << passed << "/" << total << " (" << experiment << ", "
        << detail::format("%.2f", wall) << " s)\n";
    for (std::size_t i : failing) {
      const std::vector<std::string>& r = rows[i];
      out << "  " << r[0] << " [" << r[1] << "]: estimate " << r[2]
          << " outside " << r[4] << " + 3*" << r[3] << "\n";
    }
  }
  if (man.contains("fitted_constants") && !man["fitted_constants"].empty()) {
    out << "fitted constants:";
    for (const auto& item : man["fitted_constants"].items())
      out << " " << item.key() << "=" << detail::format("%.6g", item.value().get<double>());
    out << "\n";
  }
  return out.str();
}

/* -------- Presets -------- */

struct Preset {
  std::string name;
  std::string note;
  std::string runtime;
  ExperimentConfig config;
};

namespace detail {

inline std::vector<Preset> build_presets() {
  std::vector<Preset> out;

  {
    ExperimentConfig c;
    c.kind = "crossing-split";
    c.family = "linear";
    c.linear_slope = 10.0;
    c.schedule = "constant";
    c.coefficient = 10.0;
    c.stages = 1;
    c.budget = 100000;
    c.out_dir = "runs/linear-oracle";
    out.push_back({"linear-oracle",
                   "exact splitting ledger for the slope-10 linear family",
                   "<1 s", c});
  }
  {
    ExperimentConfig c;
    c.kind = "clt";
    c.schedule = "constant";
    c.coefficient = 1e6;
    c.samples = 5000;
    c.time_n = 400;
    c.observables = {"cos_x"};
    c.out_dir = "runs/clt-constant-L";
    out.push_back({"clt-constant-L",
                   "normal fluctuations of Birkhoff sums at frozen coupling",
                   "~1 s", c});
  }
  {
    ExperimentConfig c;
    c.kind = "clt";
    c.schedule = "constant";
    c.coefficient = 1e6;
    c.samples = 2000;
    c.time_n = 400;
    c.observables = {"cos_x_minus_cos_y"};
    c.coboundary_mode = true;
    c.out_dir = "runs/coboundary-degenerate";
    out.push_back({"coboundary-degenerate",
                   "degenerate case: a coboundary collapses the variance",
                   "<1 s", c});
  }
  {
    ExperimentConfig c;
    c.kind = "sigma-tail";
    c.schedule = "polynomial";
    c.coefficient = 1e3;
    c.power = 6.0;
    c.eta = 0.7;
    c.corner_x = 0.45;
    c.corner_y = 0.3;
    c.side = 0.1;
    c.time_n = 48;
    c.samples = 20000;
    c.out_dir = "runs/sigma-tail-square";
    out.push_back({"sigma-tail-square",
                   "growth-time survival over a 0.1-square, n^6 ramp floor 1e3",
                   "~1 s", c});
  }
  {
    ExperimentConfig c;
    c.kind = "finite-time-doc";
    c.observables = {"cos_x", "cos_x"};
    c.coefficient_list = {1e3, 1e4};
    c.time_list = {2, 3, 4};
    c.budget = 250000;
    c.out_dir = "runs/finite-time-mixing";
    out.push_back({"finite-time-mixing",
                   "correlation envelope n L^(-1/7) in the anti-integrable regime",
                   "~1 s", c});
  }
  {
    ExperimentConfig c;
    c.kind = "birkhoff";
    c.schedule = "polynomial";
    c.coefficient = 1e3;
    c.power = 14.0;
    c.cap = 1e12;
    c.samples = 4000;
    c.time_list = {100, 400, 1600};
    c.observables = {"cos_x"};
    c.out_dir = "runs/strong-law-p14";
    out.push_back({"strong-law-p14",
                   "second-moment decay of time averages, capped p=14 ramp",
                   "~2 s", c});
  }
  {
    ExperimentConfig c;
    c.kind = "birkhoff";
    c.schedule = "polynomial";
    c.coefficient = 1e3;
    c.power = 32.0;
    c.cap = 1e12;
    c.samples = 4000;
    c.time_list = {100, 400};
    c.observables = {"cos_x"};
    c.out_dir = "runs/birkhoff-l2-p32";
    out.push_back({"birkhoff-l2-p32",
                   "same trend under the faster p=32 ramp",
                   "~1 s", c});
  }
  {
    ExperimentConfig c;
    c.kind = "clt";
    c.schedule = "polynomial";
    c.coefficient = 1e3;
    c.power = 56.0;
    c.cap = 1e12;
    c.samples = 2000;
    c.time_n = 400;
    c.observables = {"cos_x"};
    c.out_dir = "runs/clt-growing-p56";
    out.push_back({"clt-growing-p56",
                   "CLT along a p=56 ramp: anti-integrable within two steps",
                   "~1 s", c});
  }
  {
    ExperimentConfig c;
    c.kind = "square-mixing";
    c.schedule = "polynomial";
    c.coefficient = 1e3;
    c.power = 18.0;
    c.cap = 1e12;
    c.eta = 0.7;
    c.observables = {"cos_x_plus_y"};
    c.corner_x = 0.45;
    c.corner_y = 0.3;
    c.side = 0.1;
    c.time_list = {4, 8, 16};
    c.samples = 40000;
    c.out_dir = "runs/square-mixing-p18";
    out.push_back({"square-mixing-p18",
                   "local average of cos 2pi(x+y) over a 0.1-square, summable p=18 ramp",
                   "~1 s", c});
  }
  return out;
}

}  // namespace detail

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> list = detail::build_presets();
  return list;
}

inline const Preset& find_preset(const std::string& name) {
  for (const Preset& p : presets())
    if (p.name == name) return p;
  throw ConfigError("unknown preset: " + name);
}

inline std::string preset_listing() {
  std::ostringstream out;
  out << detail::format("%-24s %-8s %s\n", "name", "runtime", "note");
  for (const Preset& p : presets())
    out << detail::format("%-24s %-8s %s\n", p.name.c_str(),
                          p.runtime.c_str(), p.note.c_str());
  return out.str();
}

}  // namespace torusmix
