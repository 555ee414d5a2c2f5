#pragma once

/*
 * Horizontal curves and the forward graph transform.
 *
 * A curve is stored lazily: a seed interval with a height profile, plus the
 * list of stages applied so far.  Points, tangents and inverse images are
 * recovered on demand by walking the chain.  Expanded curves are
 * exponentially long, so polyline storage is not an option; inversion of the
 * monotone lift is cheap (safeguarded Newton inside a bisection bracket) and
 * accurate to a few ulps.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "torusmix/circle.hpp"
#include "torusmix/map_family.hpp"
#include "torusmix/observable.hpp"
#include "torusmix/quadrature.hpp"
#include "torusmix/rng.hpp"

namespace torusmix {

inline constexpr double kMaxSeedSlope = 0.1;
inline constexpr double kMaxSeedCurvature = 1.0;

/* Height profile of a seed curve over its parameter interval. */
struct SeedGraph {
  bool flat = true;
  bool periodic = true;  // h(s + 1) = h(s) for every real s
  double height = 0.0;
  std::function<double(double)> value_fn;
  std::function<double(double)> slope_fn;
  double slope_cap = 0.0;      // sup |h'|
  double curvature_cap = 0.0;  // sup |h''|

  static SeedGraph constant(double y) {
    SeedGraph g;
    g.height = y;
    return g;
  }

  static SeedGraph profile(std::function<double(double)> h,
                           std::function<double(double)> dh, double slope_cap,
                           double curvature_cap, bool periodic = false) {
    SeedGraph g;
    g.flat = false;
    g.periodic = periodic;
    g.value_fn = std::move(h);
    g.slope_fn = std::move(dh);
    g.slope_cap = slope_cap;
    g.curvature_cap = curvature_cap;
    return g;
  }

  double value(double s) const { return flat ? height : value_fn(s); }
  double slope(double s) const { return flat ? 0.0 : slope_fn(s); }
};

/* Lifted position and tangent after pushing a seed point through a chain. */
struct ChainState {
  double X = 0.0;
  double Y = 0.0;
  double vx = 1.0;
  double vy = 0.0;

  double slope() const { return vy / vx; }
  TorusPoint point() const { return {wrap_unit(X), wrap_unit(Y)}; }
};

inline ChainState advance(const Stage& stage, const ChainState& st) {
  StageEval e = stage.eval_lift(st.X);
  ChainState out;
  out.X = e.f - st.Y;
  out.Y = st.X;
  out.vx = e.fp * st.vx - st.vy;
  out.vy = st.vx;
  return out;
}

class HorizontalCurve {
 public:
  HorizontalCurve(std::shared_ptr<const StageSequence> seq, int base_stage,
                  double s_lo, double s_hi,
                  SeedGraph seed = SeedGraph::constant(0.0))
      : seq_(std::move(seq)),
        seed_(std::move(seed)),
        base_stage_(base_stage),
        s_lo_(s_lo),
        s_hi_(s_hi) {
    if (!seq_) throw std::invalid_argument("curve requires a stage sequence");
    if (!(s_hi_ >= s_lo_))
      throw std::invalid_argument("seed interval may not be reversed");
    if (base_stage_ < 1 || base_stage_ > seq_->horizon())
      throw std::out_of_range("base stage outside the schedule horizon");
    if (seed_.slope_cap > kMaxSeedSlope + 1e-12)
      throw std::invalid_argument("seed slope bound exceeds the admissible 1/10");
    if (seed_.curvature_cap > kMaxSeedCurvature + 1e-12)
      throw std::invalid_argument("seed curvature bound exceeds the admissible 1");
    slope_bound_ = seed_.slope_cap;
    curvature_bound_ = seed_.curvature_cap;
    refresh_domain();
  }

  const StageSequence& sequence() const { return *seq_; }
  const std::shared_ptr<const StageSequence>& sequence_ptr() const { return seq_; }
  const SeedGraph& seed() const { return seed_; }
  int base_stage() const { return base_stage_; }
  const std::vector<int>& chain() const { return chain_; }
  int chain_length() const { return static_cast<int>(chain_.size()); }
  /* Stage index the next transform would apply (consecutive-chain reading). */
  int next_stage() const { return chain_.empty() ? base_stage_ : chain_.back() + 1; }
  double seed_lo() const { return s_lo_; }
  double seed_hi() const { return s_hi_; }
  double domain_lo() const { return dom_lo_; }
  double domain_hi() const { return dom_hi_; }
  double domain_length() const { return dom_hi_ - dom_lo_; }
  bool fully_crossing() const { return fully_crossing_; }
  int wrap_count() const { return static_cast<int>(std::floor(domain_length() + 1e-9)); }
  double slope_bound() const { return slope_bound_; }
  double curvature_bound() const { return curvature_bound_; }
  CircleArc domain_arc() const {
    return {wrap_unit(dom_lo_), std::min(1.0, domain_length())};
  }

  /* Push a seed parameter through the first `prefix` chained stages. */
  ChainState eval_to(int prefix, double s) const {
    ChainState st;
    st.X = s;
    st.Y = seed_.value(s);
    st.vx = 1.0;
    st.vy = seed_.slope(s);
    for (int i = 0; i < prefix; ++i)
      st = advance(seq_->stage(chain_[static_cast<std::size_t>(i)]), st);
    return st;
  }
  ChainState eval(double s) const { return eval_to(chain_length(), s); }
  TorusPoint point_at(double s) const { return eval(s).point(); }

  /* Seed parameter whose lifted position equals `target`.  The chained lift
   * is strictly monotone on curves produced off the bad strips. */
  double invert(double target) const {
    double scale = 1.0 + std::fabs(target);
    if (target < dom_lo_ - 1e-7 * scale || target > dom_hi_ + 1e-7 * scale)
      throw std::domain_error("target lies outside the curve's horizontal extent");
    if (chain_.empty()) return std::clamp(target, s_lo_, s_hi_);
    const double t = std::clamp(target, dom_lo_, dom_hi_);
    const double sign = increasing_ ? 1.0 : -1.0;
    const double tol = 16.0 * std::numeric_limits<double>::epsilon() * scale;
    double lo = s_lo_, hi = s_hi_;
    double s = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      ChainState st = eval(s);
      double err = st.X - t;
      if (std::fabs(err) <= tol) {
        // One polishing step takes the residual to the ulp floor.
        double cand = s - err / st.vx;
        if (cand > lo && cand < hi) s = cand;
        return s;
      }
      if (sign * err < 0.0) lo = s; else hi = s;
      if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() *
                         (std::fabs(lo) + std::fabs(hi)) + 5e-324)
        return s;
      double cand = s - err / st.vx;
      s = (cand > lo && cand < hi) ? cand : 0.5 * (lo + hi);
    }
    return s;
  }

  /* First lifted representative of a circle position within the domain. */
  double lift_to_domain(CircleValue x) const {
    double t = dom_lo_ + wrap_unit(x.v - dom_lo_);
    if (t > dom_hi_ + 1e-9)
      throw std::domain_error("position is not above the curve's domain");
    return std::min(t, dom_hi_);
  }

  double height_at(CircleValue x) const {
    return wrap_unit(eval(invert(lift_to_domain(x))).Y);
  }

  /* log of the tangent-stretch factor accumulated along the chain. */
  double log_stretch(double s) const {
    ChainState st = eval(s);
    double h0 = seed_.slope(s);
    return 0.5 * std::log((st.vx * st.vx + st.vy * st.vy) / (1.0 + h0 * h0));
  }

  /* Sub-curve over [a, b].  Parameters outside the seed interval are allowed
   * only for flat or periodic profiles (used when cutting closed loops). */
  HorizontalCurve restricted(double a, double b) const {
    if (!(b >= a))
      throw std::invalid_argument("restriction interval may not be reversed");
    if ((a < s_lo_ - 1e-9 || b > s_hi_ + 1e-9) && !(seed_.flat || seed_.periodic))
      throw std::domain_error("restriction escapes a non-periodic seed interval");
    HorizontalCurve out(*this);
    out.s_lo_ = a;
    out.s_hi_ = b;
    out.refresh_domain();
    return out;
  }

 private:
  void refresh_domain() {
    double xa = eval(s_lo_).X;
    double xb = eval(s_hi_).X;
    increasing_ = xb >= xa;
    dom_lo_ = std::min(xa, xb);
    dom_hi_ = std::max(xa, xb);
    fully_crossing_ = domain_length() >= 1.0 - 1e-9;
  }

  std::shared_ptr<const StageSequence> seq_;
  SeedGraph seed_;
  std::vector<int> chain_;
  int base_stage_ = 1;
  double s_lo_ = 0.0, s_hi_ = 1.0;
  double dom_lo_ = 0.0, dom_hi_ = 1.0;
  bool increasing_ = true;
  bool fully_crossing_ = false;
  double slope_bound_ = 0.0, curvature_bound_ = 0.0;

  friend HorizontalCurve graph_transform_step(const HorizontalCurve&,
                                              const Stage&, int);
};

inline HorizontalCurve flat_circle(std::shared_ptr<const StageSequence> seq,
                                   int base_stage, double height) {
  return {std::move(seq), base_stage, 0.0, 1.0, SeedGraph::constant(height)};
}

/*
 * One forward graph-transform step.  The source curve must avoid the stage's
 * bad strips (split first); slope and curvature bounds follow the implicit
 * derivative recursions, and the lift derivative is audited at
 * `expansion_samples` parameters against the expansion floor minus the cone
 * half-width.  Validation paths use dense sampling (10^3); the split
 * pipeline passes a small count since its components already sit inside
 * strip-free gaps.
 */
inline HorizontalCurve graph_transform_step(const HorizontalCurve& c,
                                            const Stage& stage,
                                            int expansion_samples = 8) {
  const StageSequence& seq = c.sequence();
  if (stage.n < 1 || stage.n > seq.horizon() ||
      std::fabs(stage.L - seq.coefficient(stage.n)) >
          1e-9 * std::max(1.0, stage.L))
    throw std::invalid_argument("stage does not belong to the curve's schedule");
  const BadSet& bs = seq.bad(stage.n);
  if (!bs.empty()) {
    if (c.fully_crossing())
      throw std::logic_error(
          "graph transform requires a source curve off the bad strips; split first");
    CircleArc dom = c.domain_arc();
    for (const CircleArc& strip : bs.strips)
      if (arcs_total_length(arc_clip(dom, strip)) > 1e-12)
        throw std::logic_error(
            "graph transform requires a source curve off the bad strips; split first");
  }
  const double floor_exp = seq.family().expansion_floor(stage.L, seq.eta());
  const double denom = floor_exp - c.slope_bound();
  if (denom <= 1.0)
    throw std::logic_error("expansion floor too small for the graph transform");
  // The audit threshold carries 5% slack: the floor constant is measured on a
  // grid, so the derivative at a strip edge can undershoot it slightly.
  const double audit = 0.95 * (floor_exp - c.slope_bound());
  int samples = std::max(2, expansion_samples);
  for (int i = 0; i < samples; ++i) {
    double u = samples == 1 ? 0.5 : static_cast<double>(i) / (samples - 1);
    double s = c.seed_lo() + (c.seed_hi() - c.seed_lo()) * u;
    ChainState st = c.eval(s);
    double lift_deriv = stage.eval_lift(st.X).fp - st.vy / st.vx;
    if (std::fabs(lift_deriv) < audit)
      throw std::logic_error(
          "lift derivative fell below the expansion floor on the source curve");
  }
  HorizontalCurve out(c);
  out.chain_.push_back(stage.n);
  out.slope_bound_ = 1.0 / denom;
  // Slopes stay inside the cone spanned by the seed cap and the recursion's
  // fixed point (floor - sqrt(floor^2 - 4)) / 2; beyond it they diverge.
  double cone = kMaxSeedSlope;
  if (floor_exp >= 2.0)
    cone = std::max(cone, 0.5 * (floor_exp -
                                 std::sqrt(floor_exp * floor_exp - 4.0)));
  if (out.slope_bound_ > cone + 1e-12)
    throw std::logic_error("image slope escapes the admissible cone");
  out.curvature_bound_ =
      (seq.family().max_abs_fpp(stage.L) + c.curvature_bound()) /
      (denom * denom * denom);
  out.refresh_domain();
  return out;
}

struct CrossingDecomposition {
  std::vector<HorizontalCurve> pieces;
  std::vector<double> piece_source_measure;  // extent in the source curve's domain
  std::vector<CircleArc> excised_arcs;       // wrapped source-domain arcs
  std::vector<std::pair<double, double>> excised_seed;  // seed sub-intervals
  double source_measure = 0.0;
  double excised_measure = 0.0;
  std::int64_t child_count = 0;  // pieces before any subsampling
  bool subsampled = false;
};

namespace detail {

struct SplitComponent {
  double sa = 0.0, sb = 0.0;  // seed parameters, sa <= sb
  bool whole_closed = false;  // the component is the whole (closed) curve
};

/* A closed loop: integer seed length with a shift-periodic profile, and an
 * integer winding of the current domain. */
inline bool closed_loop(const HorizontalCurve& c) {
  double len = c.seed_hi() - c.seed_lo();
  double r = std::round(len);
  if (!(c.seed().flat || c.seed().periodic)) return false;
  if (r < 1.0 || std::fabs(len - r) > 1e-9) return false;
  double w = c.domain_length();
  return std::fabs(w - std::round(w)) <= 1e-6 && std::round(w) >= 1.0;
}

/*
 * Components of the curve off the stage's bad strips, as seed intervals.
 * Strip hits are appended to `excised_seed`.  For closed loops the two
 * components meeting at the parameter seam are joined by extending the seed
 * interval past s_hi (the profile is shift-periodic there).
 */
inline std::vector<SplitComponent> off_strip_components(
    const HorizontalCurve& c, const BadSet& bs,
    std::vector<std::pair<double, double>>* excised_seed) {
  std::vector<SplitComponent> comps;
  const double dlo = c.domain_lo(), dhi = c.domain_hi();
  if (bs.empty()) {
    comps.push_back({c.seed_lo(), c.seed_hi(), closed_loop(c)});
    return comps;
  }
  struct Raw {
    double lo, hi;
  };
  std::vector<Raw> raw;
  for (const CircleArc& g : bs.complement_components()) {
    double k0 = std::floor(dlo - g.start - g.length) - 1.0;
    double k1 = std::ceil(dhi - g.start) + 1.0;
    for (double k = k0; k <= k1; k += 1.0) {
      double lo = std::max(dlo, g.start + k);
      double hi = std::min(dhi, g.start + k + g.length);
      if (hi - lo > 1e-12) raw.push_back({lo, hi});
    }
  }
  std::sort(raw.begin(), raw.end(),
            [](const Raw& a, const Raw& b) { return a.lo < b.lo; });
  if (raw.empty()) {
    if (c.seed_hi() > c.seed_lo())
      excised_seed->emplace_back(c.seed_lo(), c.seed_hi());
    return comps;
  }
  std::vector<SplitComponent> in_order;
  in_order.reserve(raw.size());
  for (const Raw& r : raw) {
    double u = c.invert(r.lo);
    double v = c.invert(r.hi);
    in_order.push_back({std::min(u, v), std::max(u, v), false});
  }
  std::sort(in_order.begin(), in_order.end(),
            [](const SplitComponent& a, const SplitComponent& b) {
              return a.sa < b.sa;
            });
  const bool seam_joined = closed_loop(c) && in_order.size() >= 2 &&
                           in_order.front().sa <= c.seed_lo() + 1e-12 &&
                           in_order.back().sb >= c.seed_hi() - 1e-12;
  // Strip hits between consecutive components; the domain-end bits are strip
  // hits too unless the seam joins them into one component.
  double prev = c.seed_lo();
  for (std::size_t i = 0; i < in_order.size(); ++i) {
    if (in_order[i].sa > prev + 1e-15 && !(seam_joined && i == 0))
      excised_seed->emplace_back(prev, in_order[i].sa);
    prev = in_order[i].sb;
  }
  if (c.seed_hi() > prev + 1e-15 && !seam_joined)
    excised_seed->emplace_back(prev, c.seed_hi());
  if (seam_joined) {
    double slen = c.seed_hi() - c.seed_lo();
    SplitComponent joined{in_order.back().sa, in_order.front().sb + slen, false};
    in_order.pop_back();
    in_order.erase(in_order.begin());
    in_order.push_back(joined);
  }
  return in_order;
}

}  // namespace detail

/*
 * Cut the image of `c` under `stage` into fully crossing pieces.  The domain
 * is clipped against the stage's strips, each surviving component is pushed
 * through the graph transform, and the image interval is cut at integers;
 * the trimmed ends and strip hits are excised.  A closed source loop is cut
 * without end trims: the two leftover bits concatenate across the parameter
 * seam into one more fully crossing piece.
 *
 * `stride`/`global_index` implement uniform subsampling for the iterated
 * split: every piece is counted and all excised mass is still recorded
 * exactly, but only every stride-th child (by global enumeration order) is
 * constructed.
 */
inline CrossingDecomposition full_crossing_split(
    const HorizontalCurve& c, const Stage& stage, std::int64_t stride = 1,
    std::int64_t* global_index = nullptr) {
  if (stride < 1) throw std::invalid_argument("stride must be at least 1");
  CrossingDecomposition out;
  out.source_measure = c.domain_length();
  out.subsampled = stride > 1;
  const BadSet& bs = c.sequence().bad(stage.n);
  auto comps = detail::off_strip_components(c, bs, &out.excised_seed);
  std::int64_t local_counter = 0;
  std::int64_t* ctr = global_index ? global_index : &local_counter;
  const double snap = 1e-9;

  auto emit = [&](const HorizontalCurve& child, double u, double v) {
    double a = std::min(u, v), b = std::max(u, v);
    out.pieces.push_back(child.restricted(a, b));
    double xa = c.eval(a).X, xb = c.eval(b).X;
    out.piece_source_measure.push_back(std::fabs(xb - xa));
  };

  for (const auto& comp : comps) {
    if (comp.sb - comp.sa <= 1e-13) continue;
    HorizontalCurve sub = c.restricted(comp.sa, comp.sb);
    HorizontalCurve child = graph_transform_step(sub, stage, 2);
    const double A = child.domain_lo(), B = child.domain_hi();
    const double span = B - A;
    if (comp.whole_closed && std::fabs(span - std::round(span)) <= 1e-6 &&
        std::round(span) >= 1.0) {
      const std::int64_t W = static_cast<std::int64_t>(std::llround(span));
      const double a0 = std::ceil(A - snap);
      const double slen = comp.sb - comp.sa;
      out.child_count += W;
      double sig_prev = 0.0;
      std::int64_t prev_l = std::numeric_limits<std::int64_t>::min();
      auto sigma_at = [&](std::int64_t j) {
        double l = a0 + static_cast<double>(j);
        if (l <= B + snap) return child.invert(std::min(l, B));
        return child.invert(l - static_cast<double>(W)) + slen;
      };
      for (std::int64_t j = 0; j < W; ++j) {
        bool keep = ((*ctr)++ % stride) == 0;
        if (!keep) continue;
        double u = (prev_l == j) ? sig_prev : sigma_at(j);
        double v = sigma_at(j + 1);
        sig_prev = v;
        prev_l = j + 1;
        emit(child, u, v);
      }
    } else {
      const std::int64_t a = static_cast<std::int64_t>(std::ceil(A - snap));
      const std::int64_t b = static_cast<std::int64_t>(std::floor(B + snap));
      if (b - a < 1) {
        out.excised_seed.emplace_back(comp.sa, comp.sb);
        continue;
      }
      out.child_count += b - a;
      double sig_a = child.invert(static_cast<double>(a));
      double sig_b = child.invert(static_cast<double>(b));
      double sig_prev = sig_a;
      std::int64_t prev_l = a;
      for (std::int64_t l = a; l < b; ++l) {
        bool keep = ((*ctr)++ % stride) == 0;
        if (!keep) continue;
        double u = (prev_l == l) ? sig_prev : child.invert(static_cast<double>(l));
        double v = (l + 1 == b) ? sig_b : child.invert(static_cast<double>(l + 1));
        sig_prev = v;
        prev_l = l + 1;
        emit(child, u, v);
      }
      // End trims: the seed-order extremes of the integer cut points.
      double lo_cut = std::min(sig_a, sig_b), hi_cut = std::max(sig_a, sig_b);
      if (lo_cut - comp.sa > 1e-15)
        out.excised_seed.emplace_back(comp.sa, lo_cut);
      if (comp.sb - hi_cut > 1e-15)
        out.excised_seed.emplace_back(hi_cut, comp.sb);
    }
  }

  for (const auto& iv : out.excised_seed) {
    double xa = c.eval(iv.first).X, xb = c.eval(iv.second).X;
    double m = std::fabs(xb - xa);
    out.excised_measure += m;
    out.excised_arcs.emplace_back(wrap_unit(std::min(xa, xb)), std::min(1.0, m));
  }
  return out;
}

/* Child count of a split without constructing the pieces. */
inline std::int64_t count_split_children(const HorizontalCurve& c,
                                         const Stage& stage) {
  std::int64_t counter = 1;  // never congruent to 0: plans construct nothing
  CrossingDecomposition plan = full_crossing_split(
      c, stage, std::numeric_limits<std::int64_t>::max(), &counter);
  return plan.child_count;
}

struct IteratedSplit {
  std::vector<HorizontalCurve> pieces;
  std::vector<double> piece_source_measure;  // at the input curve's time
  double source_measure = 0.0;
  double surviving_measure = 0.0;
  double excised_measure = 0.0;
  std::vector<double> stage_excised;
  std::vector<std::int64_t> stage_child_count;  // pre-subsampling counts
  bool subsampled = false;
  bool excised_exact = true;  // false once dropped pieces force scaled estimates
};

/*
 * Apply full_crossing_split through stages m..k.  All mass bookkeeping is
 * pulled back to the input curve's own time by evaluating seed parameters
 * through the original chain prefix, so the ledger
 *   surviving + excised = source
 * telescopes exactly.  When a stage's child count exceeds the budget, every
 * stride-th child is kept; excised mass remains exact through that stage
 * (every parent is still split) and becomes a scaled estimate afterwards.
 */
inline IteratedSplit iterate_crossing_split(const HorizontalCurve& c, int m,
                                            int k,
                                            std::int64_t piece_budget = 100000) {
  if (m != c.next_stage())
    throw std::invalid_argument("iteration must start at the curve's next stage");
  if (k < m - 1) throw std::invalid_argument("empty stage range must have k = m-1");
  if (piece_budget < 1) throw std::invalid_argument("piece budget must be positive");
  IteratedSplit out;
  out.source_measure = c.domain_length();
  out.surviving_measure = out.source_measure;
  const int src_chain = c.chain_length();
  auto source_extent = [&](const HorizontalCurve& piece, double u, double v) {
    return std::fabs(piece.eval_to(src_chain, v).X -
                     piece.eval_to(src_chain, u).X);
  };
  out.pieces.push_back(c);
  out.piece_source_measure.push_back(out.source_measure);
  for (int j = m; j <= k; ++j) {
    Stage stage = c.sequence().stage(j);
    std::int64_t total = 0;
    for (const auto& p : out.pieces) total += count_split_children(p, stage);
    std::int64_t stride =
        total > piece_budget ? (total + piece_budget - 1) / piece_budget : 1;
    double held = 0.0;
    for (double w : out.piece_source_measure) held += w;
    double inflate = held > 0.0 ? out.surviving_measure / held : 1.0;
    if (inflate > 1.0 + 1e-12) out.excised_exact = false;
    std::vector<HorizontalCurve> next;
    std::vector<double> next_mass;
    std::int64_t counter = 0;
    double excised_here = 0.0;
    for (const auto& p : out.pieces) {
      CrossingDecomposition dec = full_crossing_split(p, stage, stride, &counter);
      for (const auto& iv : dec.excised_seed)
        excised_here += source_extent(p, iv.first, iv.second);
      for (auto& piece : dec.pieces) {
        next_mass.push_back(source_extent(piece, piece.seed_lo(), piece.seed_hi()));
        next.push_back(std::move(piece));
      }
    }
    excised_here *= inflate;
    out.stage_excised.push_back(excised_here);
    out.stage_child_count.push_back(total);
    out.excised_measure += excised_here;
    out.surviving_measure -= excised_here;
    out.subsampled = out.subsampled || stride > 1;
    out.pieces = std::move(next);
    out.piece_source_measure = std::move(next_mass);
    if (out.pieces.empty()) {
      out.surviving_measure = 0.0;
      break;
    }
  }
  return out;
}

/* Pieces whose seed interval touches an excised interval (the distortion
 * extremes live there). */
inline std::vector<std::size_t> boundary_piece_indices(
    const CrossingDecomposition& dec) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < dec.pieces.size(); ++i) {
    double a = dec.pieces[i].seed_lo(), b = dec.pieces[i].seed_hi();
    for (const auto& iv : dec.excised_seed) {
      if (std::fabs(a - iv.second) <= 1e-9 || std::fabs(b - iv.first) <= 1e-9) {
        idx.push_back(i);
        break;
      }
    }
  }
  return idx;
}

struct DistortionReport {
  double max_log_ratio = 0.0;
  double theoretical_bound = 0.0;
  int samples = 0;
};

/*
 * Max log tangent-stretch ratio over point pairs on one piece.  The seed
 * endpoints are always included; the stretch is monotone along a piece whose
 * preimage sits on one side of a critical point, so the endpoint pair
 * realizes the within-piece maximum there.
 */
inline DistortionReport tangent_distortion(const HorizontalCurve& piece,
                                           int sample_pairs,
                                           std::uint64_t seed = 1,
                                           double c_hat = 1.0) {
  StreamRng rng(seed, 0);
  double mn = std::numeric_limits<double>::infinity();
  double mx = -mn;
  auto take = [&](double s) {
    double v = piece.log_stretch(s);
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  };
  take(piece.seed_lo());
  take(piece.seed_hi());
  for (int i = 0; i < sample_pairs; ++i)
    take(rng.uniform(piece.seed_lo(), piece.seed_hi()));
  DistortionReport rep;
  rep.max_log_ratio = piece.seed_hi() > piece.seed_lo() ? mx - mn : 0.0;
  rep.samples = sample_pairs + 2;
  int idx = piece.chain().empty() ? piece.base_stage() : piece.chain().back();
  rep.theoretical_bound =
      c_hat * std::pow(piece.sequence().coefficient(idx),
                       1.0 - 2.0 * piece.sequence().eta());
  return rep;
}

/*
 * Quadrature of psi along the curve, uniform in x with arclength weight
 * sqrt(1 + h'^2).  Node count doubles until two successive estimates agree
 * to 1e-8 relative.
 */
template <typename Fn>
double curve_integral(const HorizontalCurve& c, Fn&& psi, int quad_points = 256) {
  const double len = c.domain_length();
  if (len <= 0.0) return 0.0;
  auto estimate = [&](int n) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      double x = c.domain_lo() + len * (j + 0.5) / n;
      ChainState st = c.eval(c.invert(x));
      double slope = st.vy / st.vx;
      sum += psi(wrap_unit(x), wrap_unit(st.Y)) * std::sqrt(1.0 + slope * slope);
    }
    return sum / n * len;
  };
  int n = std::max(16, quad_points);
  double prev = estimate(n);
  for (int round = 0; round < 5; ++round) {
    n *= 2;
    double cur = estimate(n);
    if (std::fabs(cur - prev) <= 1e-8 * (1.0 + std::fabs(cur))) return cur;
    prev = cur;
  }
  return prev;
}

struct EquidistributionReport {
  double measured = 0.0;   // |int psi o F dLeb_curve - Len * int psi|
  double std_error = 0.0;
  double bound_shape = 0.0;
  double curve_length = 0.0;
  double psi_mean = 0.0;
};

/*
 * Equidistribution error of the curve pushed through stages m..n, where m is
 * the curve's next stage.  Stratified estimator: two nodes per stratum give
 * an unbiased value and a standard error; nodes are pushed as torus points,
 * so arbitrarily strong expansion costs nothing in resolution.
 */
inline EquidistributionReport curve_equidistribution_error(
    const HorizontalCurve& c, const Observable& psi, int n_stage,
    int strata = 500000, std::uint64_t seed = 7) {
  const StageSequence& seq = c.sequence();
  const int m = c.next_stage();
  if (n_stage < m)
    throw std::invalid_argument("final stage precedes the curve's next stage");
  if (!c.fully_crossing())
    throw std::invalid_argument("equidistribution requires a fully crossing curve");
  if (strata < 1) throw std::invalid_argument("strata must be positive");
  double psi_mean =
      integrate_2d([&](double x, double y) { return psi(x, y); }).value;
  StreamRng rng(seed, 0);
  const double W = c.seed_hi() - c.seed_lo();
  double acc = 0.0, var = 0.0;
  for (int j = 0; j < strata; ++j) {
    double g[2];
    for (int r = 0; r < 2; ++r) {
      double s = c.seed_lo() + W * (j + rng.uniform()) / strata;
      ChainState st = c.eval(s);
      TorusPoint p = st.point();
      for (int t = m; t <= n_stage; ++t) p = seq.apply(t, p);
      g[r] = psi(p.x.v, p.y.v) * std::fabs(st.vx);
    }
    acc += 0.5 * (g[0] + g[1]);
    var += 0.25 * (g[0] - g[1]) * (g[0] - g[1]);
  }
  const double w = W / strata;
  EquidistributionReport out;
  out.curve_length = c.domain_length();
  out.psi_mean = psi_mean;
  out.measured = std::fabs(acc * w - out.curve_length * psi_mean);
  out.std_error = std::sqrt(var) * w;
  const double alpha = psi.alpha, eta = seq.eta();
  double shape =
      std::pow(seq.coefficient(n_stage), -alpha * (1.0 - eta) / (alpha + 2.0)) +
      std::pow(seq.coefficient(m), 1.0 - 2.0 * eta);
  for (int t = m; t < n_stage; ++t)
    shape += std::pow(seq.coefficient(t), -1.0 + eta);
  out.bound_shape = shape;
  return out;
}

/* Disintegration density ratio between two points on a piece: the inverse
 * ratio of tangent stretches accumulated along the piece's chain. */
inline double density_ratio(const HorizontalCurve& piece, const TorusPoint& p1,
                            const TorusPoint& p2) {
  auto param = [&](const TorusPoint& p) {
    // Walk the lifted representatives of p.x; on a winding curve only one of
    // them carries the matching height.
    for (double t = piece.lift_to_domain(p.x); t <= piece.domain_hi() + 1e-9;
         t += 1.0) {
      double s = piece.invert(std::min(t, piece.domain_hi()));
      if (circle_distance(wrap_unit(piece.eval(s).Y), p.y.v) <= 1e-6) return s;
    }
    throw std::domain_error("point is not on the piece");
  };
  double s1 = param(p1), s2 = param(p2);
  return std::exp(piece.log_stretch(s2) - piece.log_stretch(s1));
}

}  // namespace torusmix
