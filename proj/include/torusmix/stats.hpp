#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "torusmix/foliation.hpp"
#include "torusmix/map_family.hpp"
#include "torusmix/observable.hpp"
#include "torusmix/parallel.hpp"
#include "torusmix/quadrature.hpp"
#include "torusmix/result_table.hpp"
#include "torusmix/rng.hpp"

namespace torusmix {

/* Uniform periodic tensor grid; the trapezoid rule on it is spectrally
 * accurate for smooth periodic integrands. */
struct QuadratureGrid {
  int points_per_axis = 64;
  int dimension = 2;
};

template <typename Fn>
QuadratureResult integrate(const QuadratureGrid& grid, Fn&& f) {
  if (grid.points_per_axis < 16)
    throw std::invalid_argument("quadrature grid needs at least 16 points per axis");
  if (grid.dimension < 1 || grid.dimension > 3)
    throw std::invalid_argument("quadrature dimension must be 1, 2, or 3");
  if constexpr (std::is_invocable_r_v<double, Fn, double>) {
    if (grid.dimension != 1)
      throw std::invalid_argument("integrand arity does not match the grid dimension");
    return integrate_periodic([&](double x, double, double) { return f(x); }, 1,
                              1e-10, grid.points_per_axis);
  } else if constexpr (std::is_invocable_r_v<double, Fn, double, double>) {
    if (grid.dimension != 2)
      throw std::invalid_argument("integrand arity does not match the grid dimension");
    return integrate_periodic(
        [&](double x, double y, double) { return f(x, y); }, 2, 1e-10,
        grid.points_per_axis);
  } else {
    if (grid.dimension != 3)
      throw std::invalid_argument("integrand arity does not match the grid dimension");
    return integrate_periodic(std::forward<Fn>(f), 3, 1e-10,
                              grid.points_per_axis);
  }
}

struct EnsembleSpec {
  std::int64_t samples = 1000;  // M
  int time_n = 100;             // N
  int burn_in = 0;              // M0; <= 0 picks floor(sqrt(N))
  std::uint64_t seed = 1;
  bool stratified = true;
};

namespace detail {

inline void validate_spec(const EnsembleSpec& spec) {
  if (spec.samples < 100)
    throw std::invalid_argument("ensemble needs at least 100 samples");
  if (spec.time_n < 1) throw std::invalid_argument("ensemble time must be >= 1");
}

inline double observable_mean(const Observable& o) {
  return integrate_2d([&](double x, double y) { return o(x, y); }).value;
}

inline void require_zero_mean(const Observable& o) {
  if (std::fabs(observable_mean(o)) > 1e-8)
    throw std::invalid_argument("observable must have zero mean");
}

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;       // unbiased sample variance
  double se_mean = 0.0;   // standard error of the mean
  double se_var = 0.0;    // standard error of the variance estimate
};

inline MeanVar mean_var(const std::vector<double>& v) {
  MeanVar out;
  const double n = static_cast<double>(v.size());
  if (v.empty()) return out;
  double s = 0.0;
  for (double x : v) s += x;
  out.mean = s / n;
  if (v.size() < 2) return out;
  double s2 = 0.0, s4 = 0.0;
  for (double x : v) {
    double d = x - out.mean;
    s2 += d * d;
    s4 += d * d * d * d;
  }
  out.var = s2 / (n - 1.0);
  out.se_mean = std::sqrt(out.var / n);
  double m2 = s2 / n;
  double m4 = s4 / n;
  double var_of_var = std::max(0.0, m4 - m2 * m2) / n;
  out.se_var = std::sqrt(var_of_var);
  return out;
}

}  // namespace detail

/* Mean-corrected copy: subtracts the quadrature mean. */
inline Observable mean_corrected(const Observable& o) {
  double mu = detail::observable_mean(o);
  Observable out = o;
  if (std::fabs(mu) > 1e-14) {
    auto base = o.f;
    out.f = [base, mu](double x, double y) { return base(x, y) - mu; };
    out.id = o.id + "_centered";
  }
  out.mean = 0.0;
  out.zero_mean = true;
  return out;
}

/*
 * Asymptotic variance of the singular-limit chain,
 *   sigma^2 = int phi^2 + 2 int phi(x,z) phi(z,y) dx dy dz,
 * cross-checked against its Markov-chain (Green-Kubo) form
 *   int phi^2 + 2 int phi . P phi  with  P phi(x,y) = int phi(b,x) db.
 * The two are the same integral, evaluated on different grids.
 */
struct SigmaSquaredReport {
  double value = 0.0;
  double green_kubo = 0.0;
  double residual = 0.0;
};

inline SigmaSquaredReport sigma_squared_report(const Observable& phi) {
  detail::require_zero_mean(phi);
  double sq = integrate_2d([&](double x, double y) {
                double v = phi(x, y);
                return v * v;
              }).value;
  double cross = integrate_3d([&](double x, double y, double z) {
                   return phi(x, z) * phi(z, y);
                 }).value;
  SigmaSquaredReport rep;
  rep.value = sq + 2.0 * cross;

  auto p_phi = [&](double x) {
    return integrate_1d([&](double b) { return phi(b, x); }, 1e-12).value;
  };
  double cross_gk =
      integrate_2d([&](double x, double y) { return phi(x, y) * p_phi(x); })
          .value;
  rep.green_kubo = sq + 2.0 * cross_gk;
  rep.residual = std::fabs(rep.value - rep.green_kubo);
  if (rep.residual > 1e-9)
    throw std::runtime_error(
        "asymptotic variance disagrees with its Markov-chain form");
  return rep;
}

inline double sigma_squared(const Observable& phi) {
  return sigma_squared_report(phi).value;
}

/*
 * Identity behind the coboundary characterization: the asymptotic variance
 * equals int (phi(x,y) + g(x) - g(y))^2 dx dy with g(t) = int phi(z,t) dz.
 * When it vanishes, psi(x) = -g(x) reconstructs phi as psi(x) - psi(y).
 */
struct CoboundaryReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
  bool coboundary = false;
  double reconstruction_residual = 0.0;
};

inline CoboundaryReport coboundary_identity_check(const Observable& phi) {
  CoboundaryReport rep;
  rep.lhs = sigma_squared(phi);
  auto g = [&](double t) {
    return integrate_1d([&](double z) { return phi(z, t); }, 1e-12).value;
  };
  rep.rhs = integrate_2d([&](double x, double y) {
              double v = phi(x, y) + g(x) - g(y);
              return v * v;
            }).value;
  rep.residual = std::fabs(rep.lhs - rep.rhs);
  rep.coboundary = rep.lhs <= 1e-8;
  if (rep.coboundary) {
    auto psi = [&](double t) { return -g(t); };
    const int G = 128;
    double worst = 0.0;
    for (int i = 0; i < G; ++i)
      for (int j = 0; j < G; ++j) {
        double x = i / static_cast<double>(G);
        double y = j / static_cast<double>(G);
        worst = std::max(worst, std::fabs(phi(x, y) - psi(x) + psi(y)));
      }
    rep.reconstruction_residual = worst;
  }
  return rep;
}

/*
 * Transition operator of the limit chain: P psi(x,y) = int psi(b,x) db.
 * Two applications wash out the state entirely, so k >= 2 returns the
 * constant int psi.
 */
inline Observable markov_apply_P(const Observable& psi, int k = 1) {
  if (k < 1) throw std::invalid_argument("Markov operator power must be >= 1");
  Observable out;
  out.alpha = psi.alpha;
  out.holder_norm = psi.holder_norm;
  out.trig_polynomial = psi.trig_polynomial;
  out.declared_only = psi.declared_only;
  if (k >= 2) {
    double c = detail::observable_mean(psi);
    out.id = "P^" + std::to_string(k) + "(" + psi.id + ")";
    out.mean = c;
    out.zero_mean = std::fabs(c) <= 1e-10;
    out.f = [c](double, double) { return c; };
    return out;
  }
  out.id = "P(" + psi.id + ")";
  out.mean = psi.mean;
  out.zero_mean = psi.zero_mean;
  auto base = psi.f;
  out.f = [base](double x, double) {
    return integrate_1d([&](double b) { return base(b, x); }, 1e-12).value;
  };
  return out;
}

enum class CorrelationMethod { stratified_mc, grid };

struct CorrelationEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::int64_t nodes = 0;
};

/*
 * int phi1(F_m^n p) phi2(p) dp with F_m^n the composition of stages m..n
 * inclusive.  The stratified estimator jitters one node per cell of a G x G
 * grid; the plain grid rule is admitted only while the accumulated expansion
 * times the grid spacing stays below 1e-2.
 */
inline CorrelationEstimate correlation(const Observable& phi1,
                                       const Observable& phi2,
                                       const StageSequence& seq, int m, int n,
                                       CorrelationMethod method,
                                       std::int64_t budget = 1000000,
                                       std::uint64_t seed = 1,
                                       int threads = 0) {
  if (m < 1 || m > n) throw std::invalid_argument("correlation needs 1 <= m <= n");
  if (n > seq.horizon())
    throw std::invalid_argument("correlation window escapes the schedule horizon");
  if (budget < 4) throw std::invalid_argument("correlation budget too small");

  const int G = std::max(2, static_cast<int>(std::floor(std::sqrt(
                                 static_cast<double>(budget)))));
  const std::int64_t nodes = static_cast<std::int64_t>(G) * G;

  auto value_at = [&](TorusPoint p) {
    TorusPoint q = p;
    for (int t = m; t <= n; ++t) q = seq.apply(t, q);
    return phi1(q.x.v, q.y.v) * phi2(p.x.v, p.y.v);
  };

  std::vector<double> vals(static_cast<std::size_t>(nodes));
  if (method == CorrelationMethod::grid) {
    double expansion = 1.0;
    for (int t = m; t <= n; ++t) {
      Stage st = seq.stage(t);
      double sup = 0.0;
      for (int i = 0; i < 4096; ++i)
        sup = std::max(sup, std::fabs(st.eval(i / 4096.0).fp));
      expansion *= sup;
    }
    if (expansion / G > 0.01)
      throw std::runtime_error(
          "grid correlation is unresolved at this expansion; use the "
          "stratified estimator");
    parallel_for(nodes, threads, [&](std::int64_t i) {
      int r = static_cast<int>(i / G), c = static_cast<int>(i % G);
      vals[static_cast<std::size_t>(i)] =
          value_at(TorusPoint((c + 0.5) / G, (r + 0.5) / G));
    });
    detail::MeanVar mv = detail::mean_var(vals);
    return {mv.mean, 0.0, nodes};
  }

  parallel_for(nodes, threads, [&](std::int64_t i) {
    int r = static_cast<int>(i / G), c = static_cast<int>(i % G);
    StreamRng rng(seed, static_cast<std::uint64_t>(i));
    double px = (c + rng.uniform()) / G;
    double py = (r + rng.uniform()) / G;
    vals[static_cast<std::size_t>(i)] = value_at(TorusPoint(px, py));
  });
  detail::MeanVar mv = detail::mean_var(vals);
  return {mv.mean, mv.se_mean, nodes};
}

/*
 * Finite-time decay-of-correlations scan: for each constant coefficient L and
 * time n, the measured correlation is compared against the bound shape
 * ||phi|| ||psi|| n L^(-alpha/(3 alpha + 4)).  A single envelope constant is
 * fitted as the worst ratio over the cells above the noise floor; cells
 * decaying faster than the shape leave slack, as an upper bound allows.
 */
inline ResultTable finite_time_doc_scan(const MapFamily& family, double eta,
                                        const Observable& phi,
                                        const Observable& psi,
                                        const std::vector<double>& L_list,
                                        const std::vector<int>& n_list,
                                        std::int64_t budget = 1000000,
                                        std::uint64_t seed = 1,
                                        int threads = 0) {
  if (L_list.empty() || n_list.empty())
    throw std::invalid_argument("decay scan needs coefficients and times");
  const double alpha = std::min(phi.alpha, psi.alpha);
  const double expo = -alpha / (3.0 * alpha + 4.0);
  const double norm_prod = phi.holder_norm * psi.holder_norm;
  int horizon = *std::max_element(n_list.begin(), n_list.end());

  double mean_prod = detail::observable_mean(phi) * detail::observable_mean(psi);

  struct Cell {
    double L;
    int n;
    double est;
    double se;
    double shape;
  };
  std::vector<Cell> cells;
  std::uint64_t stream = seed;
  for (double L : L_list) {
    StageSequence seq(family, CoefficientSchedule::constant(L), eta, horizon);
    for (int n : n_list) {
      CorrelationEstimate ce =
          correlation(phi, psi, seq, 1, n, CorrelationMethod::stratified_mc,
                      budget, ++stream, threads);
      cells.push_back(
          {L, n, ce.estimate - mean_prod, ce.std_error,
           norm_prod * n * std::pow(L, expo)});
    }
  }

  double c_hat = 0.0;
  for (const Cell& c : cells)
    if (std::fabs(c.est) > 3.0 * c.se && c.shape > 0.0)
      c_hat = std::max(c_hat, std::fabs(c.est) / c.shape);

  ResultTable table;
  for (const Cell& c : cells) {
    char params[96];
    std::snprintf(params, sizeof params, "L=%g;n=%d;alpha=%g", c.L, c.n, alpha);
    bool pass = std::fabs(c.est) <= c_hat * c.shape + 3.0 * c.se;
    table.add("finite-time-doc", params, c.est, c.se, c_hat * c.shape, c_hat,
              pass);
  }
  return table;
}

namespace detail {

/* Samples p_i and time averages over [from, N) for each ensemble member. */
template <typename Acc>
void ensemble_walk(const Observable& phi, const StageSequence& seq,
                   const EnsembleSpec& spec, int threads, Acc&& acc) {
  const std::int64_t M = spec.samples;
  const int N = spec.time_n;
  if (seq.horizon() < N - 1)
    throw std::invalid_argument("schedule horizon shorter than the ensemble time");
  const int strat_g = static_cast<int>(std::floor(std::sqrt(static_cast<double>(M))));
  parallel_for(M, threads, [&](std::int64_t i) {
    StreamRng rng(spec.seed, static_cast<std::uint64_t>(i));
    double px = rng.uniform(), py = rng.uniform();
    if (spec.stratified && strat_g >= 2 && i < static_cast<std::int64_t>(strat_g) * strat_g) {
      std::int64_t r = i / strat_g, c = i % strat_g;
      px = (c + px) / strat_g;
      py = (r + py) / strat_g;
    }
    TorusPoint q(px, py);
    acc(i, [&](auto&& visit) {
      for (int t = 0; t < N; ++t) {
        visit(t, phi(q.x.v, q.y.v));
        if (t + 1 < N) q = seq.apply(t + 1, q);
      }
    });
  });
}

}  // namespace detail

/*
 * Birkhoff averages (1/N) S_N over an ensemble: the empirical L^2 norm and
 * the sample maximum, plus the same statistics for the burn-in split that
 * discards the first M0 terms.
 */
inline ResultTable birkhoff_ensemble(const Observable& phi,
                                     const StageSequence& seq,
                                     const EnsembleSpec& spec,
                                     int threads = 0) {
  detail::validate_spec(spec);
  Observable phic = mean_corrected(phi);
  const std::int64_t M = spec.samples;
  const int N = spec.time_n;
  const int m0 = spec.burn_in > 0
                     ? spec.burn_in
                     : static_cast<int>(std::floor(std::sqrt(static_cast<double>(N))));
  if (m0 >= N) throw std::invalid_argument("burn-in must be shorter than the time window");

  std::vector<double> full(static_cast<std::size_t>(M));
  std::vector<double> split(static_cast<std::size_t>(M));
  detail::ensemble_walk(phic, seq, spec, threads, [&](std::int64_t i, auto&& walk) {
    double s = 0.0, s_tail = 0.0;
    walk([&](int t, double v) {
      s += v;
      if (t >= m0) s_tail += v;
    });
    full[static_cast<std::size_t>(i)] = s / N;
    split[static_cast<std::size_t>(i)] = s_tail / (N - m0);
  });

  double sig = sigma_squared(phic);
  char params[128];
  std::snprintf(params, sizeof params, "M=%lld;N=%d;M0=%d;schedule=%s",
                static_cast<long long>(M), N, m0, seq.schedule().describe().c_str());

  ResultTable table;
  auto add_rows = [&](const char* tag_l2, const char* tag_max,
                      const std::vector<double>& a, int window) {
    std::vector<double> sq(a.size());
    double amax = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      sq[j] = a[j] * a[j];
      amax = std::max(amax, std::fabs(a[j]));
    }
    detail::MeanVar mv = detail::mean_var(sq);
    double theory = sig / window;
    bool pass = std::fabs(mv.mean - theory) <= 0.1 * theory + 3.0 * mv.se_mean;
    table.add(tag_l2, params, mv.mean, mv.se_mean, theory, 0.0, pass);
    std::vector<double> av(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) av[j] = std::fabs(a[j]);
    detail::MeanVar mva = detail::mean_var(av);
    table.add(tag_max, params, amax, mva.se_mean, 0.0, 0.0, true);
  };
  add_rows("birkhoff.l2", "birkhoff.max", full, N);
  add_rows("birkhoff.l2_burn", "birkhoff.max_burn", split, N - m0);
  return table;
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/* Two-sided Kolmogorov-Smirnov distance against a continuous CDF. */
inline double ks_statistic(std::vector<double> values,
                           const std::function<double(double)>& cdf) {
  if (values.empty()) throw std::invalid_argument("KS needs samples");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double c = cdf(values[i]);
    d = std::max(d, std::max(c - i / n, (i + 1) / n - c));
  }
  return d;
}

/*
 * CLT ensemble: distribution of S_N / sqrt(N).  Reports the sample variance
 * against sigma^2, the KS distance of the normalized sums against the exact
 * standard normal CDF, and a variance-stability row at N/2.  Coboundary mode
 * instead verifies that the variance collapses.
 */
inline ResultTable clt_ensemble(const Observable& phi, const StageSequence& seq,
                                const EnsembleSpec& spec,
                                bool coboundary_mode = false, int threads = 0) {
  detail::validate_spec(spec);
  Observable phic = mean_corrected(phi);
  double sig = sigma_squared(phic);
  if (!coboundary_mode && sig <= 1e-10)
    throw std::invalid_argument(
        "asymptotic variance vanishes; run the coboundary mode");

  const std::int64_t M = spec.samples;
  const int N = spec.time_n;
  auto run = [&](int window) {
    std::vector<double> v(static_cast<std::size_t>(M));
    EnsembleSpec s2 = spec;
    s2.time_n = window;
    detail::ensemble_walk(phic, seq, s2, threads, [&](std::int64_t i, auto&& walk) {
      double s = 0.0;
      walk([&](int, double val) { s += val; });
      v[static_cast<std::size_t>(i)] = s / std::sqrt(static_cast<double>(window));
    });
    return v;
  };

  std::vector<double> v = run(N);
  detail::MeanVar mv = detail::mean_var(v);
  char params[128];
  std::snprintf(params, sizeof params, "M=%lld;N=%d;schedule=%s",
                static_cast<long long>(M), N, seq.schedule().describe().c_str());

  ResultTable table;
  if (coboundary_mode) {
    double theory = 4.0 * phi.holder_norm * phi.holder_norm / N;
    table.add("clt.coboundary_variance", params, mv.var, mv.se_var, theory, 0.0,
              mv.var <= theory);
    return table;
  }

  bool var_pass = std::fabs(mv.var - sig) <= 0.03 * sig + 3.0 * mv.se_var;
  table.add("clt.variance", params, mv.var, mv.se_var, sig, 0.0, var_pass);

  std::vector<double> z(v.size());
  double sd = std::sqrt(sig);
  for (std::size_t i = 0; i < v.size(); ++i) z[i] = v[i] / sd;
  double ks = ks_statistic(z, [](double x) { return normal_cdf(x); });
  double ks_allow = 0.02 + 1.63 / std::sqrt(static_cast<double>(M));
  table.add("clt.ks", params, ks, 1.63 / std::sqrt(static_cast<double>(M)), 0.02,
            0.0, ks <= ks_allow);

  int half = std::max(1, N / 2);
  std::vector<double> vh = run(half);
  detail::MeanVar mvh = detail::mean_var(vh);
  bool stable = std::fabs(mv.var - mvh.var) <=
                0.1 * sig + 3.0 * (mv.se_var + mvh.se_var);
  table.add("clt.variance_stability", params, mvh.var, mvh.se_var, mv.var, 0.0,
            stable);
  return table;
}

/*
 * Mixing from a square: uniform samples in R pushed n stages, compared with
 * the Lebesgue mean of psi.  The bound shape follows
 *   max( L_{n/2}^(-min(2 eta - 1, alpha(1-eta)/(alpha+2))),
 *        l^{-2} sum_{i >= n/8} L_i^{-(1-eta)/2} ),
 * with the tail sum truncated at the schedule horizon, and the envelope
 * constant is fitted over the rows above the noise floor.
 */
inline ResultTable square_mixing(const Observable& psi, const StageSequence& seq,
                                 double side, double corner_x, double corner_y,
                                 const std::vector<int>& n_list,
                                 std::int64_t samples, std::uint64_t seed = 1,
                                 int threads = 0) {
  if (n_list.empty()) throw std::invalid_argument("square mixing needs times");
  if (samples < 100) throw std::invalid_argument("square mixing needs at least 100 samples");
  SquareRegion region = SquareRegion::square(corner_x, corner_y, side);
  const double eta = seq.eta();
  const double alpha = psi.alpha;
  const double expo1 = -std::min(2.0 * eta - 1.0, alpha * (1.0 - eta) / (alpha + 2.0));
  double psi_mean = detail::observable_mean(psi);

  struct Row {
    int n;
    double est;
    double se;
    double shape;
  };
  std::vector<Row> rows;
  for (int n : n_list) {
    if (n < 1 || n > seq.horizon())
      throw std::invalid_argument("mixing time escapes the schedule horizon");
    std::vector<double> vals(static_cast<std::size_t>(samples));
    parallel_for(samples, threads, [&](std::int64_t i) {
      StreamRng rng(seed + static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(i));
      TorusPoint q = region.sample(rng);
      for (int t = 1; t <= n; ++t) q = seq.apply(t, q);
      vals[static_cast<std::size_t>(i)] = psi(q.x.v, q.y.v);
    });
    detail::MeanVar mv = detail::mean_var(vals);

    double tail = 0.0;
    for (int i = std::max(1, n / 8); i <= seq.horizon(); ++i)
      tail += std::pow(seq.coefficient(i), -0.5 * (1.0 - eta));
    double shape = psi.holder_norm *
                   std::max(std::pow(seq.coefficient(std::max(1, n / 2)), expo1),
                            tail / (side * side));
    rows.push_back({n, mv.mean - psi_mean, mv.se_mean, shape});
  }

  double c_hat = 0.0;
  for (const Row& r : rows)
    if (std::fabs(r.est) > 3.0 * r.se && r.shape > 0.0)
      c_hat = std::max(c_hat, std::fabs(r.est) / r.shape);

  ResultTable table;
  for (const Row& r : rows) {
    char params[128];
    std::snprintf(params, sizeof params, "n=%d;side=%g;samples=%lld;schedule=%s",
                  r.n, side, static_cast<long long>(samples),
                  seq.schedule().describe().c_str());
    bool pass = std::fabs(r.est) <= c_hat * r.shape + 3.0 * r.se;
    table.add("square-mixing", params, r.est, r.se, c_hat * r.shape, c_hat, pass);
  }
  return table;
}

}  // namespace torusmix
