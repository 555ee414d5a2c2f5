#pragma once

/*
 * Stopping times and the per-point curve-growth tracker.
 *
 * The tracker follows one sample's horizontal curve germ along its orbit,
 * storing only the lifted horizontal extent and the endpoint heights.  Steps
 * whose center sits off the current strips push the endpoints through the
 * monotone lift and clip against the next stage's strip atoms (exact); steps
 * whose center is trapped restart from a horizontal segment cut by the next
 * strips.  The restart cut drops the image-boundary pieces of the true
 * partition, which over-estimates the radius and so under-estimates the
 * growth time: measured tails stay on the conservative side of the bound
 * they are tested against.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "torusmix/circle.hpp"
#include "torusmix/map_family.hpp"
#include "torusmix/parallel.hpp"
#include "torusmix/rng.hpp"

namespace torusmix {

/* Sampling region: an axis-aligned square or the full torus. */
struct SquareRegion {
  bool full = true;
  double corner_x = 0.0, corner_y = 0.0, side = 1.0;

  static SquareRegion full_torus() { return SquareRegion{}; }

  static SquareRegion square(double corner_x, double corner_y, double side) {
    if (!(side > 0.0 && side <= 1.0))
      throw std::invalid_argument("square side must lie in (0, 1]");
    SquareRegion s;
    s.full = false;
    s.corner_x = wrap_unit(corner_x);
    s.corner_y = wrap_unit(corner_y);
    s.side = side;
    return s;
  }

  bool contains(const TorusPoint& p) const {
    if (full) return true;
    return wrap_unit(p.x.v - corner_x) <= side + 1e-12 &&
           wrap_unit(p.y.v - corner_y) <= side + 1e-12;
  }

  TorusPoint sample(StreamRng& rng) const {
    if (full) return {rng.uniform(), rng.uniform()};
    return {corner_x + side * rng.uniform(), corner_y + side * rng.uniform()};
  }

  double measure() const { return full ? 1.0 : side * side; }
};

/* Integer stopping value over a finite horizon with a censoring flag. */
struct StoppingValue {
  int value = 1;
  bool censored = false;
};

struct StoppingRecord {
  StoppingValue tau;
  StoppingValue tau_bar;
  StoppingValue sigma;
  int horizon = 0;
  bool persistence_ok = true;  // radius held the threshold after sigma
  int persistence_steps = 0;   // how many post-sigma steps were checked
};

enum class Regime { growing, restarted };

/*
 * Tracked curve germ at one time: lifted horizontal extent around the
 * center plus lifted endpoint heights.  Heights are kept in the lift so
 * that pushing an endpoint never picks a wrap branch different from its
 * neighbours'.
 */
struct TrackerState {
  TorusPoint center;
  double center_x = 0.0, center_y = 0.0;  // lifted center coordinates
  double left_x = 0.0, right_x = 0.0;     // lifted extent, left <= center <= right
  double left_y = 0.0, right_y = 0.0;     // lifted endpoint heights
  Regime regime = Regime::growing;
  bool clipped = false;  // an endpoint was cut by a strip atom this step

  double extent() const { return right_x - left_x; }
  bool fully_crossing() const { return extent() >= 1.0 - 1e-9; }

  /* Horizontal distance from the center to the nearer end, capped at the
   * circle's injectivity radius once the curve is fully crossing. */
  double radius() const {
    if (fully_crossing()) return 0.5;
    return std::min(center_x - left_x, right_x - center_x);
  }
};

namespace detail {

/* Lift of the arc component of `bs` (strip if inside, gap otherwise)
 * containing circle position x, anchored at lifted coordinate X. */
inline bool atom_window(const BadSet& bs, double X, double* lo, double* hi) {
  double x = wrap_unit(X);
  const std::vector<CircleArc>* arcs = nullptr;
  std::vector<CircleArc> gaps;
  if (bs.contains(x)) {
    arcs = &bs.strips;
  } else {
    gaps = bs.complement_components();
    arcs = &gaps;
  }
  for (const CircleArc& a : *arcs) {
    if (!a.contains(x)) continue;
    double off = wrap_unit(x - a.start);
    if (off > a.length) off = 0.0;  // landed on the wrapped left edge
    *lo = X - off;
    *hi = *lo + a.length;
    return true;
  }
  return false;
}

inline TrackerState initial_state(const StageSequence& seq,
                                  const SquareRegion& region,
                                  const TorusPoint& p) {
  TrackerState st;
  st.center = p;
  st.center_x = p.x.v;
  st.center_y = p.y.v;
  st.left_y = st.right_y = p.y.v;
  const BadSet& bs = seq.bad(1);
  if (!bs.empty() && bs.contains(p.x.v)) {
    st.left_x = st.right_x = st.center_x;
    st.regime = Regime::restarted;
    return st;
  }
  st.left_x = st.center_x - 0.5;
  st.right_x = st.center_x + 0.5;
  if (!region.full) {
    double off = wrap_unit(p.x.v - region.corner_x);
    if (off > region.side) off = region.side;
    st.left_x = st.center_x - off;
    st.right_x = st.left_x + region.side;
  }
  double lo, hi;
  if (!bs.empty() && atom_window(bs, st.center_x, &lo, &hi)) {
    st.left_x = std::max(st.left_x, lo);
    st.right_x = std::min(st.right_x, hi);
  }
  return st;
}

/* One tracker step: stage n acts on the state at time n. */
inline TrackerState step(const StageSequence& seq, int n,
                         const TrackerState& st) {
  const Stage stage = seq.stage(n);
  const BadSet& cur = seq.bad(n);
  const BadSet& next = seq.bad(n + 1);
  TrackerState out;
  out.center = apply_forward(stage, st.center);

  if (!cur.empty() && cur.contains(st.center.x.v)) {
    // Case 2: the center is trapped; restart from a horizontal segment cut
    // by the next stage's strips.
    out.center_x = out.center.x.v;
    out.center_y = out.center.y.v;
    out.left_y = out.right_y = out.center_y;
    out.regime = Regime::restarted;
    double lo, hi;
    if (next.empty()) {
      out.left_x = out.center_x - 0.5;
      out.right_x = out.center_x + 0.5;
    } else if (next.contains(out.center.x.v)) {
      out.left_x = out.right_x = out.center_x;
    } else if (atom_window(next, out.center_x, &lo, &hi)) {
      out.left_x = lo;
      out.right_x = hi;
    } else {
      out.left_x = out.right_x = out.center_x;
    }
    return out;
  }

  // Case 1: push the extent through the monotone lift, then re-anchor the
  // lifted frame on the wrapped orbit.  Keeping center_x equal to center.x
  // stops the lift from drifting away from the orbit (the two would separate
  // exponentially) and keeps every coordinate within sin's precise range.
  auto push_x = [&stage](double X, double Y) { return stage.eval_lift(X).f - Y; };
  double cx = push_x(st.center_x, st.center_y);
  double lx = push_x(st.left_x, st.left_y);
  double rx = push_x(st.right_x, st.right_y);
  double ly = st.left_x, ry = st.right_x;
  if (lx > rx) {
    std::swap(lx, rx);
    std::swap(ly, ry);
  }
  double shift = cx - out.center.x.v;
  lx -= shift;
  rx -= shift;
  out.center_x = out.center.x.v;
  out.center_y = out.center.y.v;
  out.left_x = lx;
  out.right_x = rx;
  out.left_y = ly;
  out.right_y = ry;
  out.regime = Regime::growing;

  double lo, hi;
  if (!next.empty() && atom_window(next, out.center_x, &lo, &hi)) {
    auto height_at = [&](double x) {
      double t = (x - lx) / std::max(rx - lx, 1e-300);
      return ly + t * (ry - ly);
    };
    if (lo > out.left_x) {
      out.left_y = height_at(lo);
      out.left_x = lo;
      out.clipped = true;
    }
    if (hi < out.right_x) {
      out.right_y = height_at(hi);
      out.right_x = hi;
      out.clipped = true;
    }
  }
  out.left_x = std::min(out.left_x, out.center_x);
  out.right_x = std::max(out.right_x, out.center_x);
  return out;
}

inline StoppingValue stop_from_visits(const std::vector<char>& visit,
                                      int n_max) {
  StoppingValue sv;
  int last = 0;
  for (int m = 1; m <= n_max; ++m)
    if (visit[static_cast<std::size_t>(m)]) last = m;
  sv.value = 1 + last;
  sv.censored = last * 10 > 9 * n_max;
  return sv;
}

}  // namespace detail

/*
 * Orbit-trapping time: 1 + the last m <= n_max with the orbit point at time
 * m inside B_m.  Censored when the last visit falls in the final 10% of the
 * horizon, since later visits cannot be ruled out.
 */
inline StoppingValue compute_tau(const StageSequence& seq, const TorusPoint& p,
                                 int n_max) {
  if (n_max < 1) throw std::invalid_argument("horizon must be >= 1");
  if (seq.horizon() < n_max)
    throw std::invalid_argument("schedule horizon shorter than the tracking window");
  std::vector<char> visit(static_cast<std::size_t>(n_max) + 1, 0);
  TorusPoint q = p;
  for (int m = 1; m <= n_max; ++m) {
    visit[static_cast<std::size_t>(m)] = seq.bad(m).contains(q.x.v) ? 1 : 0;
    if (m < n_max) q = seq.apply(m, q);
  }
  return detail::stop_from_visits(visit, n_max);
}

/* As compute_tau with the margin-widened strips. */
inline StoppingValue compute_tau_bar(const StageSequence& seq,
                                     const TorusPoint& p, int n_max) {
  if (n_max < 1) throw std::invalid_argument("horizon must be >= 1");
  if (seq.horizon() < n_max)
    throw std::invalid_argument("schedule horizon shorter than the tracking window");
  std::vector<char> visit(static_cast<std::size_t>(n_max) + 1, 0);
  TorusPoint q = p;
  for (int m = 1; m <= n_max; ++m) {
    visit[static_cast<std::size_t>(m)] = seq.bad_margin(m).contains(q.x.v) ? 1 : 0;
    if (m < n_max) q = seq.apply(m, q);
  }
  return detail::stop_from_visits(visit, n_max);
}

struct TrackResult {
  StoppingRecord record;
  std::vector<TrackerState> history;  // states at times 1..n_max when kept
};

/*
 * Track one sample's curve germ to the horizon.  sigma is the first time
 * k >= tau_bar whose radius reaches the growth threshold of stage k; after
 * sigma the threshold must hold at every later recorded time, and the first
 * ten such steps are reported in the record.
 */
inline TrackResult track_sigma(const StageSequence& seq,
                               const SquareRegion& region, const TorusPoint& p,
                               int n_max, bool keep_history = false) {
  if (n_max < 1) throw std::invalid_argument("horizon must be >= 1");
  if (seq.horizon() < n_max)
    throw std::invalid_argument("schedule horizon shorter than the tracking window");
  if (!region.contains(p))
    throw std::invalid_argument("tracked point must lie in the sampling region");

  TrackResult out;
  out.record.horizon = n_max;
  std::vector<char> visit(static_cast<std::size_t>(n_max) + 1, 0);
  std::vector<char> visit_margin(static_cast<std::size_t>(n_max) + 1, 0);

  TrackerState st = detail::initial_state(seq, region, p);
  int sigma = 0;
  bool persistence_ok = true;
  int persistence_steps = 0;
  std::vector<double> radius_at(static_cast<std::size_t>(n_max) + 1, 0.0);

  for (int k = 1; k <= n_max; ++k) {
    visit[static_cast<std::size_t>(k)] = seq.bad(k).contains(st.center.x.v) ? 1 : 0;
    visit_margin[static_cast<std::size_t>(k)] =
        seq.bad_margin(k).contains(st.center.x.v) ? 1 : 0;
    radius_at[static_cast<std::size_t>(k)] = st.radius();
    if (keep_history) out.history.push_back(st);
    if (k < n_max) st = detail::step(seq, k, st);
  }

  out.record.tau = detail::stop_from_visits(visit, n_max);
  out.record.tau_bar = detail::stop_from_visits(visit_margin, n_max);

  for (int k = out.record.tau_bar.value; k <= n_max; ++k) {
    if (radius_at[static_cast<std::size_t>(k)] >= seq.growth_threshold(k)) {
      sigma = k;
      break;
    }
  }
  if (sigma == 0 || out.record.tau_bar.censored) {
    out.record.sigma.value = sigma == 0 ? n_max + 1 : sigma;
    out.record.sigma.censored = true;
  } else {
    out.record.sigma.value = sigma;
    for (int k = sigma + 1; k <= std::min(n_max, sigma + 10); ++k) {
      ++persistence_steps;
      if (radius_at[static_cast<std::size_t>(k)] < seq.growth_threshold(k))
        persistence_ok = false;
    }
  }
  out.record.persistence_ok = persistence_ok;
  out.record.persistence_steps = persistence_steps;
  return out;
}

/* One stopping record per region sample, deterministic in (seed, index). */
inline std::vector<StoppingRecord> collect_stopping_records(
    const StageSequence& seq, const SquareRegion& region, int n_max,
    std::int64_t samples, std::uint64_t seed = 1, int threads = 0) {
  if (samples < 1) throw std::invalid_argument("need at least one sample");
  std::vector<StoppingRecord> records(static_cast<std::size_t>(samples));
  parallel_for(samples, threads, [&](std::int64_t i) {
    StreamRng rng(seed, static_cast<std::uint64_t>(i));
    TorusPoint p = region.sample(rng);
    records[static_cast<std::size_t>(i)] =
        track_sigma(seq, region, p, n_max).record;
  });
  return records;
}

enum class StopKind { tau, tau_bar, sigma };

struct SurvivalCurve {
  std::vector<int> thresholds;
  std::vector<double> empirical;
  std::vector<double> std_error;
  std::vector<double> theoretical_shape;
  double fitted_c = 0.0;
  bool dominated = true;  // empirical <= fitted_c * shape + 3 SE everywhere
  std::int64_t records = 0;
  std::int64_t uncensored = 0;
};

/*
 * Empirical survival function with binomial errors against the schedule's
 * tail-sum shape.  Censored records count as alive through their horizon.
 * The tail sums run to the schedule horizon: the infinite sums they stand
 * in for need not converge for constant schedules.
 */
inline SurvivalCurve survival_tail(const std::vector<StoppingRecord>& records,
                                   StopKind which, const StageSequence& seq) {
  SurvivalCurve out;
  out.records = static_cast<std::int64_t>(records.size());
  auto pick = [which](const StoppingRecord& r) -> const StoppingValue& {
    switch (which) {
      case StopKind::tau: return r.tau;
      case StopKind::tau_bar: return r.tau_bar;
      default: return r.sigma;
    }
  };
  int max_value = 1;
  for (const StoppingRecord& r : records) {
    const StoppingValue& sv = pick(r);
    if (!sv.censored) {
      ++out.uncensored;
      max_value = std::max(max_value, sv.value);
    }
  }
  if (out.uncensored == 0)
    throw std::runtime_error("all records are censored");
  if (out.uncensored < 1000)
    throw std::invalid_argument(
        "survival tail needs at least 1000 uncensored records");

  const double exponent =
      which == StopKind::tau ? seq.eta() - 1.0 : 0.5 * (seq.eta() - 1.0);
  const double n_total = static_cast<double>(records.size());
  double tail = 0.0;
  std::vector<double> tail_from(static_cast<std::size_t>(seq.horizon()) + 2, 0.0);
  for (int i = seq.horizon(); i >= 1; --i) {
    tail += std::pow(seq.coefficient(i), exponent);
    tail_from[static_cast<std::size_t>(i)] = tail;
  }

  int n_hi = std::min(max_value, seq.horizon());
  for (int n = 1; n <= n_hi; ++n) {
    std::int64_t alive = 0;
    for (const StoppingRecord& r : records) {
      const StoppingValue& sv = pick(r);
      if (sv.censored ? r.horizon >= n : sv.value > n) ++alive;
    }
    double p_hat = static_cast<double>(alive) / n_total;
    out.thresholds.push_back(n);
    out.empirical.push_back(p_hat);
    out.std_error.push_back(std::sqrt(p_hat * (1.0 - p_hat) / n_total));
    out.theoretical_shape.push_back(tail_from[static_cast<std::size_t>(n)]);
  }

  // One-sided envelope: calibrate the constant on the cells that are above
  // the noise floor, then require domination with a 3 SE allowance on all.
  for (std::size_t i = 0; i < out.empirical.size(); ++i) {
    if (out.empirical[i] > 3.0 * out.std_error[i] &&
        out.theoretical_shape[i] > 0.0)
      out.fitted_c =
          std::max(out.fitted_c, out.empirical[i] / out.theoretical_shape[i]);
  }
  for (std::size_t i = 0; i < out.empirical.size(); ++i) {
    if (out.empirical[i] >
        out.fitted_c * out.theoretical_shape[i] + 3.0 * out.std_error[i]) {
      out.dominated = false;
      break;
    }
  }
  return out;
}

struct ProliferationReport {
  double mass = 0.0;
  double std_error = 0.0;
  double lower_bound_shape = 0.0;  // 1 - L_n^(-(1-eta)/2)
  int n = 0;
  std::int64_t samples = 0;
};

/*
 * Fraction of the region whose tracker at time n has reached the growth
 * threshold with its center clear of the stage-n strips (with margin).
 */
inline ProliferationReport proliferated_mass(const StageSequence& seq,
                                             const SquareRegion& region, int n,
                                             std::int64_t samples,
                                             std::uint64_t seed = 1,
                                             int threads = 0) {
  if (n < 2) throw std::invalid_argument("proliferation time must be >= 2");
  if (samples < 1) throw std::invalid_argument("need at least one sample");
  if (seq.horizon() < n)
    throw std::invalid_argument("schedule horizon shorter than the tracking window");
  std::vector<char> good(static_cast<std::size_t>(samples), 0);
  parallel_for(samples, threads, [&](std::int64_t i) {
    StreamRng rng(seed, static_cast<std::uint64_t>(i));
    TorusPoint p = region.sample(rng);
    TrackerState st = detail::initial_state(seq, region, p);
    for (int k = 1; k < n; ++k) st = detail::step(seq, k, st);
    bool ok = st.radius() >= seq.growth_threshold(n) &&
              !seq.bad_margin(n).contains(st.center.x.v);
    good[static_cast<std::size_t>(i)] = ok ? 1 : 0;
  });
  std::int64_t hits = 0;
  for (char g : good) hits += g;
  ProliferationReport rep;
  rep.n = n;
  rep.samples = samples;
  rep.mass = static_cast<double>(hits) / static_cast<double>(samples);
  rep.std_error =
      std::sqrt(rep.mass * (1.0 - rep.mass) / static_cast<double>(samples));
  rep.lower_bound_shape =
      1.0 - std::pow(seq.coefficient(n), -0.5 * (1.0 - seq.eta()));
  return rep;
}

}  // namespace torusmix
