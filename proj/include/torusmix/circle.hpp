#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace torusmix {

/*
 * The circle is [0, 1) with addition mod 1.  All stored representatives are
 * half-open: wrap() never returns 1.0, even when rounding pushes the
 * difference x - floor(x) onto it.
 */
inline double wrap_unit(double x) {
  double r = x - std::floor(x);
  return r < 1.0 ? r : 0.0;
}

struct CircleValue {
  double v = 0.0;

  CircleValue() = default;
  explicit CircleValue(double raw) : v(wrap_unit(raw)) {}

  friend bool operator==(CircleValue a, CircleValue b) { return a.v == b.v; }
};

inline double circle_distance(double a, double b) {
  double d = std::fabs(wrap_unit(a) - wrap_unit(b));
  return std::min(d, 1.0 - d);
}

inline double circle_distance(CircleValue a, CircleValue b) {
  return circle_distance(a.v, b.v);
}

struct TorusPoint {
  CircleValue x;
  CircleValue y;

  TorusPoint() = default;
  TorusPoint(double px, double py) : x(px), y(py) {}
};

/*
 * Closed-on-the-left arc of the circle: {wrap(start + t) : 0 <= t <= length},
 * with 0 <= length <= 1.  length == 1 is the whole circle.
 */
struct CircleArc {
  double start = 0.0;   // representative in [0, 1)
  double length = 0.0;

  CircleArc() = default;
  CircleArc(double s, double len) : start(wrap_unit(s)), length(len) {}

  bool full() const { return length >= 1.0; }

  bool contains(double x) const {
    if (full()) return true;
    double off = wrap_unit(x - start);
    return off <= length || off > 1.0 - 1e-15;
  }
};

/*
 * Intersection of `arc` with `window`, returned as sub-arcs of `arc`.
 * Both inputs live on the circle, so the result has up to two components.
 */
inline std::vector<CircleArc> arc_clip(const CircleArc& arc, const CircleArc& window) {
  std::vector<CircleArc> out;
  if (arc.length <= 0.0) return out;
  if (window.length <= 0.0) return out;
  if (window.full()) {
    out.push_back(arc);
    return out;
  }
  if (arc.full()) {
    out.emplace_back(window.start, window.length);
    return out;
  }
  // Lift arc to [a, a + len] in R; try the three lifts of window that can meet it.
  double a = arc.start;
  double b = a + arc.length;
  for (int k = -1; k <= 1; ++k) {
    double w0 = window.start + k;
    double w1 = w0 + window.length;
    double lo = std::max(a, w0);
    double hi = std::min(b, w1);
    if (hi > lo) out.emplace_back(wrap_unit(lo), hi - lo);
  }
  // Adjacent lifts can abut at a shared endpoint; merge exact duplicates.
  if (out.size() == 2 && out[0].start == out[1].start) out.pop_back();
  return out;
}

/* Total length of a finite union of pairwise disjoint arcs. */
inline double arcs_total_length(const std::vector<CircleArc>& arcs) {
  double s = 0.0;
  for (const auto& a : arcs) s += a.length;
  return s;
}

}  // namespace torusmix
