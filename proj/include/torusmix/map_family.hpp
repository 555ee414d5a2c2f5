#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "torusmix/circle.hpp"
#include "torusmix/linalg.hpp"

namespace torusmix {

inline constexpr double kMaxCoefficient = 1e12;
inline constexpr double kWarnCoefficient = 1e8;

/* Value of a stage lift and its first two derivatives at a point. */
struct StageEval {
  double f = 0.0;
  double fp = 0.0;
  double fpp = 0.0;
};

/*
 * One-parameter family of circle-map lifts x -> f_L(x).  The lift is defined
 * on all of R and satisfies f(x + 1) = f(x) + degree.
 *
 * Built-in families:
 *   trig-standard:  f(x) = L sin(2 pi x) + 2 x          (degree 2)
 *   linear-test:    f(x) = q x + c, integer q >= 2      (degree q, no
 *                   critical points; L is identified with q)
 * A custom family supplies its own lift callables of signature (L, x).
 */
struct MapFamily {
  enum class Kind { TrigStandard, LinearTest, Custom };

  Kind kind = Kind::TrigStandard;
  double q = 10.0;  // linear-test slope (integer)
  double c = 0.0;   // linear-test offset

  std::function<double(double, double)> custom_f;
  std::function<double(double, double)> custom_fp;
  std::function<double(double, double)> custom_fpp;
  int custom_degree = 0;
  std::string custom_name = "custom";

  static MapFamily trig_standard() { return MapFamily{}; }

  static MapFamily linear_test(double slope, double offset = 0.0) {
    if (slope < 2.0 || slope != std::floor(slope))
      throw std::invalid_argument("linear-test slope must be an integer >= 2");
    MapFamily fam;
    fam.kind = Kind::LinearTest;
    fam.q = slope;
    fam.c = offset;
    return fam;
  }

  std::string name() const {
    switch (kind) {
      case Kind::TrigStandard: return "trig-standard";
      case Kind::LinearTest: return "linear-test";
      default: return custom_name;
    }
  }

  int degree(double L) const {
    switch (kind) {
      case Kind::TrigStandard: return 2;
      case Kind::LinearTest: return static_cast<int>(q);
      default: { (void)L; return custom_degree; }
    }
  }

  StageEval eval(double L, double x) const {
    constexpr double tau = 2.0 * std::numbers::pi;
    switch (kind) {
      case Kind::TrigStandard: {
        double s = std::sin(tau * x);
        double co = std::cos(tau * x);
        return {L * s + 2.0 * x, tau * L * co + 2.0, -tau * tau * L * s};
      }
      case Kind::LinearTest:
        return {q * x + c, q, 0.0};
      default:
        return {custom_f(L, x), custom_fp(L, x), custom_fpp(L, x)};
    }
  }

  double max_abs_fpp(double L) const {
    constexpr double tau = 2.0 * std::numbers::pi;
    switch (kind) {
      case Kind::TrigStandard: return tau * tau * L;
      case Kind::LinearTest: return 0.0;
      default: {
        double m = 0.0;
        for (int i = 0; i < 4096; ++i)
          m = std::max(m, std::fabs(custom_fpp(L, i / 4096.0)));
        return m;
      }
    }
  }

  /* Expansion floor |f'| available on the complement of the strips.  The
   * linear family expands by exactly q everywhere; for families with
   * critical points the strip geometry guarantees 2 L^eta. */
  double expansion_floor(double L, double eta) const {
    return kind == Kind::LinearTest ? q : 2.0 * std::pow(L, eta);
  }
};

/* Nondecreasing coefficient schedule n -> L_n (n >= 1). */
class CoefficientSchedule {
 public:
  enum class Kind { Constant, Polynomial, Explicit };

  static CoefficientSchedule constant(double L) {
    CoefficientSchedule s;
    s.kind_ = Kind::Constant;
    s.L0_ = check(L);
    return s;
  }

  /* L_n = min(cap, max(L0, n^p)); cap <= 0 means uncapped. */
  static CoefficientSchedule polynomial(double L0, double p, double cap = 0.0) {
    if (p < 0.0) throw std::invalid_argument("schedule exponent must be >= 0");
    CoefficientSchedule s;
    s.kind_ = Kind::Polynomial;
    s.L0_ = check(L0);
    s.p_ = p;
    if (cap > 0.0) s.cap_ = check(cap);
    return s;
  }

  /* Explicit list for stages 1..k; constant at the back beyond the list. */
  static CoefficientSchedule explicit_values(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("empty coefficient list");
    for (std::size_t i = 0; i < values.size(); ++i) {
      check(values[i]);
      if (i > 0 && values[i] < values[i - 1])
        throw std::invalid_argument("coefficient schedule must be nondecreasing");
    }
    CoefficientSchedule s;
    s.kind_ = Kind::Explicit;
    s.values_ = std::move(values);
    return s;
  }

  double value(int n) const {
    if (n < 1) throw std::invalid_argument("stage index must be >= 1");
    switch (kind_) {
      case Kind::Constant: return L0_;
      case Kind::Polynomial: {
        double raw = std::max(L0_, std::pow(static_cast<double>(n), p_));
        if (cap_ > 0.0) raw = std::min(raw, cap_);
        return check(raw);
      }
      default:
        return values_[std::min<std::size_t>(n - 1, values_.size() - 1)];
    }
  }

  Kind kind() const { return kind_; }
  std::string describe() const {
    switch (kind_) {
      case Kind::Constant: return "constant L=" + std::to_string(L0_);
      case Kind::Polynomial:
        return "max(" + std::to_string(L0_) + ", n^" + std::to_string(p_) +
               (cap_ > 0.0 ? ") cap " + std::to_string(cap_) : ")");
      default: return "explicit[" + std::to_string(values_.size()) + "]";
    }
  }

 private:
  static double check(double L) {
    if (!(L > 0.0)) throw std::invalid_argument("coefficient must be positive");
    if (L > kMaxCoefficient)
      throw std::domain_error("coefficient exceeds hard cap 1e12; use a capped schedule");
    return L;
  }

  Kind kind_ = Kind::Constant;
  double L0_ = 0.0;
  double p_ = 0.0;
  double cap_ = 0.0;
  std::vector<double> values_;
};

/* A single composition step: the map F_n(x, y) = (f_{L_n}(x) - y mod 1, x). */
struct Stage {
  int n = 1;
  double L = 0.0;
  const MapFamily* family = nullptr;

  StageEval eval(double x) const { return family->eval(L, x); }
  int degree() const { return family->degree(L); }

  /* Lift evaluation at an arbitrary real.  The argument is reduced to [0,1)
   * first and the integer part re-added through the winding degree, so the
   * trigonometric part is always evaluated at a small argument.  Direct
   * evaluation at a large lifted coordinate would lose ~L*ulp(x) of absolute
   * precision to argument rounding. */
  StageEval eval_lift(double X) const {
    double base = std::floor(X);
    StageEval e = eval(X - base);
    e.f += degree() * base;
    return e;
  }
};

/*
 * Forward map.  The lift value is reduced to its fractional part before the
 * subtraction so that the wrap arithmetic happens at unit scale; this keeps
 * forward/inverse consistent to machine precision even for large L.
 */
inline TorusPoint apply_forward(const Stage& st, const TorusPoint& p) {
  double F = st.eval(p.x.v).f;
  double r = F - std::floor(F);
  double t = r - p.y.v;
  if (t < 0.0) t += 1.0;
  if (t >= 1.0) t = 0.0;
  TorusPoint out;
  out.x.v = t;
  out.y = p.x;
  return out;
}

inline TorusPoint apply_inverse(const Stage& st, const TorusPoint& p) {
  double F = st.eval(p.y.v).f;
  double r = F - std::floor(F);
  double t = r - p.x.v;
  if (t < 0.0) t += 1.0;
  if (t >= 1.0) t = 0.0;
  TorusPoint out;
  out.x = p.y;
  out.y.v = t;
  return out;
}

inline Mat2 jacobian(const Stage& st, double x) {
  return {st.eval(x).fp, -1.0, 1.0, 0.0};
}

/* Zero set of f' on the circle, sorted representatives in [0, 1). */
struct CriticalSet {
  std::vector<double> roots;

  double distance(double x) const {
    if (roots.empty()) return std::numeric_limits<double>::infinity();
    double d = 1.0;
    for (double r : roots) d = std::min(d, circle_distance(x, r));
    return d;
  }
};

/*
 * Locate the critical set by sign-change bracketing of f' on a uniform grid,
 * bisection to ~1e-13 and a Newton polish.  Assumes simple zeros.
 */
inline CriticalSet critical_set(const MapFamily& fam, double L, int grid_size = 10000) {
  CriticalSet cs;
  if (fam.kind == MapFamily::Kind::LinearTest) return cs;
  int N = std::max(grid_size, 16);
  auto fp = [&](double x) { return fam.eval(L, x).fp; };
  double prev = fp(0.0);
  for (int i = 1; i <= N; ++i) {
    double xi = static_cast<double>(i) / N;
    double cur = fp(xi);
    if (prev == 0.0) {
      cs.roots.push_back(wrap_unit(static_cast<double>(i - 1) / N));
      prev = cur;
      continue;
    }
    if ((prev < 0.0) != (cur < 0.0)) {
      double a = static_cast<double>(i - 1) / N, b = xi;
      double fa = prev;
      for (int it = 0; it < 80 && b - a > 1e-15; ++it) {
        double m = 0.5 * (a + b);
        double fm = fp(m);
        if (fm == 0.0) { a = b = m; break; }
        if ((fa < 0.0) == (fm < 0.0)) { a = m; fa = fm; } else { b = m; }
      }
      double root = 0.5 * (a + b);
      for (int it = 0; it < 3; ++it) {
        StageEval e = fam.eval(L, root);
        if (e.fpp != 0.0) {
          double step = e.fp / e.fpp;
          if (std::fabs(step) < 1.0 / N) root -= step;
        }
      }
      cs.roots.push_back(wrap_unit(root));
    }
    prev = cur;
  }
  std::sort(cs.roots.begin(), cs.roots.end());
  return cs;
}

/*
 * Union of closed strips {d(x, root) <= half_width} around the critical set.
 * Boundary points count as inside.
 */
struct BadSet {
  std::vector<double> centers;  // sorted critical roots
  double half_width = 0.0;
  std::vector<CircleArc> strips;  // merged components

  bool empty() const { return centers.empty() || half_width <= 0.0; }

  /* Boundary points are inside; the comparison carries a few ulps of slack
   * so that representatives computed as root + half_width stay classified. */
  bool contains(double x) const {
    if (centers.empty()) return false;
    for (double r : centers)
      if (circle_distance(x, r) <= half_width + 1e-14) return true;
    return false;
  }

  /* Distance from x to the strip union (0 inside). */
  double distance(double x) const {
    if (centers.empty()) return std::numeric_limits<double>::infinity();
    double d = 1.0;
    for (double r : centers) d = std::min(d, circle_distance(x, r));
    return std::max(0.0, d - half_width);
  }

  /* Components of the complement, each a maximal open gap between strips. */
  std::vector<CircleArc> complement_components() const {
    std::vector<CircleArc> gaps;
    if (strips.empty()) {
      gaps.emplace_back(0.0, 1.0);
      return gaps;
    }
    if (strips.size() == 1 && strips[0].full()) return gaps;
    for (std::size_t i = 0; i < strips.size(); ++i) {
      double end = strips[i].start + strips[i].length;
      double next = strips[(i + 1) % strips.size()].start + (i + 1 == strips.size() ? 1.0 : 0.0);
      double len = next - end;
      if (len > 0.0) gaps.emplace_back(wrap_unit(end), len);
    }
    return gaps;
  }
};

inline BadSet bad_set(const CriticalSet& cs, double half_width) {
  BadSet bs;
  bs.centers = cs.roots;
  bs.half_width = half_width;
  if (cs.roots.empty() || half_width <= 0.0) return bs;
  // Merge [r - w, r + w] intervals around the circle.
  std::vector<std::pair<double, double>> iv;
  for (double r : cs.roots) iv.emplace_back(r - half_width, r + half_width);
  std::sort(iv.begin(), iv.end());
  std::vector<std::pair<double, double>> merged;
  for (auto& p : iv) {
    if (!merged.empty() && p.first <= merged.back().second)
      merged.back().second = std::max(merged.back().second, p.second);
    else
      merged.push_back(p);
  }
  // Wraparound: last strip may reach into the first.
  if (merged.size() > 1 && merged.back().second >= merged.front().first + 1.0) {
    merged.front().first = merged.back().first - 1.0;
    merged.pop_back();
  }
  double total = 0.0;
  for (auto& p : merged) total += p.second - p.first;
  if (total >= 1.0) {
    bs.strips.emplace_back(0.0, 1.0);
    return bs;
  }
  for (auto& p : merged) bs.strips.emplace_back(wrap_unit(p.first), p.second - p.first);
  std::sort(bs.strips.begin(), bs.strips.end(),
            [](const CircleArc& a, const CircleArc& b) { return a.start < b.start; });
  return bs;
}

/* Measured hypothesis constants for one family at one coefficient value. */
struct HypothesisReport {
  double L = 0.0;
  double k0_hat = 0.0;       // (max|f'| + max|f''|) / L
  double k1_hat = 0.0;       // max over the grid of L d(x, C) / |f'(x)|
  int m0_hat = 0;            // number of critical points
  double max_fp = 0.0;
  double max_fpp = 0.0;
  int grid_size = 0;
  bool derivative_instability = false;

  double k0_declared = 0.0, k1_declared = 0.0;
  int m0_declared = 0;
  bool h1_pass = true, h2_pass = true, h3_pass = true;
};

inline HypothesisReport validate_hypotheses(const MapFamily& fam, double L,
                                            int grid_size = 10000,
                                            double k0_declared = 0.0,
                                            double k1_declared = 0.0,
                                            int m0_declared = 0) {
  HypothesisReport rep;
  rep.L = L;
  rep.grid_size = std::max(grid_size, m0_declared > 0 ? 64 * m0_declared : 0);
  rep.grid_size = std::max(rep.grid_size, 10000);
  CriticalSet cs = critical_set(fam, L, rep.grid_size);
  rep.m0_hat = static_cast<int>(cs.roots.size());

  int N = rep.grid_size;
  for (int i = 0; i < N; ++i) {
    double x = (i + 0.5) / N;
    StageEval e = fam.eval(L, x);
    rep.max_fp = std::max(rep.max_fp, std::fabs(e.fp));
    rep.max_fpp = std::max(rep.max_fpp, std::fabs(e.fpp));
    double d = cs.distance(x);
    if (d > 0.0 && std::isfinite(d)) {
      double afp = std::fabs(e.fp);
      if (afp < 1e-300) {
        rep.derivative_instability = true;
        continue;
      }
      rep.k1_hat = std::max(rep.k1_hat, L * d / afp);
    }
  }
  rep.k0_hat = (rep.max_fp + rep.max_fpp) / L;

  rep.k0_declared = k0_declared;
  rep.k1_declared = k1_declared;
  rep.m0_declared = m0_declared;
  if (k0_declared > 0.0) rep.h1_pass = rep.k0_hat <= k0_declared;
  if (m0_declared > 0) rep.h2_pass = rep.m0_hat <= m0_declared;
  if (k1_declared > 0.0) rep.h3_pass = rep.k1_hat <= k1_declared;
  return rep;
}

/*
 * Running Lyapunov-type exponents (1/k) log ||dF^k(p)|| for k = 1..n along
 * the orbit of p, with per-step renormalization of the cocycle product.
 */
template <typename StageAt>
std::vector<double> cocycle_norm_growth(StageAt&& stage_at, TorusPoint p, int n) {
  std::vector<double> out;
  out.reserve(n);
  Mat2 M;  // identity
  double acc = 0.0;
  TorusPoint cur = p;
  for (int k = 1; k <= n; ++k) {
    Stage st = stage_at(k);
    M = jacobian(st, cur.x.v).mul(M);
    double s = M.frobenius();
    acc += std::log(s);
    M = M.scaled(1.0 / s);
    out.push_back((acc + std::log(M.spectral_norm())) / k);
    cur = apply_forward(st, cur);
  }
  return out;
}

/*
 * A family + schedule + exponent eta bundled with per-stage critical data.
 * Stages are 1-based; everything needed up to `horizon` is precomputed so
 * the object is safe for concurrent read-only use.
 */
class StageSequence {
 public:
  struct Options {
    double k1_override = 0.0;  // > 0 replaces the measured constant
    int grid_size = 10000;
    int m0_declared = 0;
  };

  StageSequence(MapFamily fam, CoefficientSchedule sched, double eta, int horizon)
      : StageSequence(std::move(fam), std::move(sched), eta, horizon, Options()) {}

  StageSequence(MapFamily fam, CoefficientSchedule sched, double eta, int horizon,
                Options opts)
      : family_(std::move(fam)), schedule_(std::move(sched)), eta_(eta),
        horizon_(horizon), opts_(opts) {
    if (!(eta > 0.5 && eta < 1.0))
      throw std::invalid_argument("eta must lie in (1/2, 1)");
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    if (opts_.k1_override > 0.0) {
      k1_ = opts_.k1_override;
    } else {
      HypothesisReport rep =
          validate_hypotheses(family_, schedule_.value(1), opts_.grid_size);
      k1_ = rep.k1_hat;
    }
    build();
  }

  double eta() const { return eta_; }
  double eta_prime() const { return 0.5 * (1.0 + eta_); }
  double k1() const { return k1_; }
  int horizon() const { return horizon_; }
  const MapFamily& family() const { return family_; }
  const CoefficientSchedule& schedule() const { return schedule_; }
  bool coefficient_warning() const { return warn_; }

  double coefficient(int n) const { return L_.at(index(n)); }

  Stage stage(int n) const { return {n, coefficient(n), &family_}; }

  const CriticalSet& critical(int n) const { return crit_[index(n)]; }

  /* B_n: strips of half-width 2 K1 L_n^{eta-1} around the critical set. */
  const BadSet& bad(int n) const { return bad_[index(n)]; }

  /* Widened strips used by the margin stopping time, half-width
   * 2 K1 L_n^{eta-1} + K1 L_n^{(eta-1)/2}. */
  const BadSet& bad_margin(int n) const { return bad_margin_[index(n)]; }

  double bad_half_width(int n) const { return bad_[index(n)].half_width; }

  /* Radius threshold K1 L_n^{(eta-1)/2} for the curve-growth time. */
  double growth_threshold(int n) const {
    return k1_ * std::pow(coefficient(n), 0.5 * (eta_ - 1.0));
  }

  TorusPoint apply(int n, const TorusPoint& p) const { return apply_forward(stage(n), p); }

 private:
  std::size_t index(int n) const {
    if (n < 1 || n > horizon_)
      throw std::out_of_range("stage index outside built horizon");
    return static_cast<std::size_t>(n - 1);
  }

  void build() {
    L_.resize(horizon_);
    crit_.resize(horizon_);
    bad_.resize(horizon_);
    bad_margin_.resize(horizon_);
    for (int n = 1; n <= horizon_; ++n) {
      double L = schedule_.value(n);
      if (L > kWarnCoefficient) warn_ = true;
      L_[n - 1] = L;
      if (n > 1 && L == L_[n - 2]) {
        crit_[n - 1] = crit_[n - 2];
      } else {
        crit_[n - 1] = critical_set(family_, L, opts_.grid_size);
      }
      double w = 2.0 * k1_ * std::pow(L, eta_ - 1.0);
      double wm = w + k1_ * std::pow(L, 0.5 * (eta_ - 1.0));
      bad_[n - 1] = bad_set(crit_[n - 1], crit_[n - 1].roots.empty() ? 0.0 : w);
      bad_margin_[n - 1] = bad_set(crit_[n - 1], crit_[n - 1].roots.empty() ? 0.0 : wm);
    }
  }

  MapFamily family_;
  CoefficientSchedule schedule_;
  double eta_;
  int horizon_;
  Options opts_;
  double k1_ = 0.0;
  bool warn_ = false;
  std::vector<double> L_;
  std::vector<CriticalSet> crit_;
  std::vector<BadSet> bad_;
  std::vector<BadSet> bad_margin_;
};

}  // namespace torusmix
