#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "torusmix/curve.hpp"
#include "torusmix/map_family.hpp"
#include "torusmix/observable.hpp"
#include "torusmix/rng.hpp"

using namespace torusmix;

namespace {

std::shared_ptr<const StageSequence> linear_seq(int horizon) {
  return std::make_shared<StageSequence>(MapFamily::linear_test(10.0, 0.0),
                                         CoefficientSchedule::constant(10.0),
                                         0.75, horizon);
}

std::shared_ptr<const StageSequence> trig_seq(double L, int horizon,
                                              double eta = 0.75) {
  return std::make_shared<StageSequence>(MapFamily::trig_standard(),
                                         CoefficientSchedule::constant(L), eta,
                                         horizon);
}

/*
 * Exact split ledger for the q = 10, c = 0, height 0.3 circle, computed by
 * plain lift arithmetic.  The composed lifts are
 *   X1(s) = 10 s - 0.3,  X2(s) = 99 s - 3,  X3(s) = 980 s - 29.7,
 * and a split cuts an image interval [A, B] at interior integers; the two
 * end trims are lost.  The closed stage-1 loop is cut without trims: the two
 * leftovers join across the parameter seam.
 */
struct LinearOracle {
  std::vector<std::int64_t> counts;
  std::vector<double> excised;  // per stage, in seed measure
};

LinearOracle linear_split_oracle() {
  LinearOracle o;
  const double snap = 1e-9;
  std::vector<std::pair<double, double>> cur;
  for (int l = 0; l < 10; ++l)
    cur.push_back({(l + 0.3) / 10.0, (l + 1.3) / 10.0});
  o.counts.push_back(10);
  o.excised.push_back(0.0);
  const double coef[2][2] = {{99.0, 3.0}, {980.0, 29.7}};
  for (int stage = 0; stage < 2; ++stage) {
    const double m = coef[stage][0], c = coef[stage][1];
    std::vector<std::pair<double, double>> next;
    double lost = 0.0;
    std::int64_t count = 0;
    for (auto [u, v] : cur) {
      double A = m * u - c, B = m * v - c;
      double a = std::ceil(A - snap), b = std::floor(B + snap);
      if (b - a < 1.0) {
        lost += v - u;
        continue;
      }
      count += static_cast<std::int64_t>(b - a);
      lost += ((a - A) + (B - b)) / m;
      for (double l = a; l < b; l += 1.0)
        next.push_back({(l + c) / m, (l + 1.0 + c) / m});
    }
    o.counts.push_back(count);
    o.excised.push_back(lost);
    cur = std::move(next);
  }
  return o;
}

}  // namespace

TEST_CASE("seed admissibility and basic geometry", "[curve]") {
  auto seq = linear_seq(3);
  HorizontalCurve circle = flat_circle(seq, 1, 0.4);
  CHECK(circle.domain_lo() == 0.0);
  CHECK(circle.domain_hi() == 1.0);
  CHECK(circle.fully_crossing());
  CHECK(circle.wrap_count() == 1);
  CHECK(circle.slope_bound() == 0.0);
  CHECK(circle.next_stage() == 1);
  CHECK(circle.height_at(CircleValue(0.77)) == Catch::Approx(0.4));

  HorizontalCurve point(seq, 2, 0.3, 0.3, SeedGraph::constant(0.1));
  CHECK(point.domain_length() == 0.0);
  CHECK_FALSE(point.fully_crossing());
  CHECK(point.next_stage() == 2);

  SeedGraph steep = SeedGraph::profile(
      [](double s) { return 0.2 * s; }, [](double) { return 0.2; }, 0.2, 0.0);
  CHECK_THROWS_AS(HorizontalCurve(seq, 1, 0.0, 1.0, steep),
                  std::invalid_argument);
  SeedGraph curvy = SeedGraph::profile(
      [](double s) { return 0.01 * std::sin(8.0 * s); },
      [](double s) { return 0.08 * std::cos(8.0 * s); }, 0.08, 2.0);
  CHECK_THROWS_AS(HorizontalCurve(seq, 1, 0.0, 1.0, curvy),
                  std::invalid_argument);
  CHECK_THROWS_AS(HorizontalCurve(seq, 0, 0.0, 1.0), std::out_of_range);
  CHECK_THROWS_AS(HorizontalCurve(seq, 4, 0.0, 1.0), std::out_of_range);
  CHECK_THROWS_AS(HorizontalCurve(seq, 1, 0.5, 0.4), std::invalid_argument);
}

TEST_CASE("linear graph transform matches the closed form", "[curve]") {
  auto seq = linear_seq(3);
  HorizontalCurve circle = flat_circle(seq, 1, 0.3);
  HorizontalCurve child = graph_transform_step(circle, seq->stage(1));

  CHECK(child.domain_lo() == Catch::Approx(-0.3).margin(1e-14));
  CHECK(child.domain_hi() == Catch::Approx(9.7).margin(1e-14));
  CHECK(child.wrap_count() == 10);
  CHECK(child.fully_crossing());
  CHECK(child.slope_bound() == Catch::Approx(0.1).margin(1e-15));
  CHECK(child.curvature_bound() == 0.0);

  for (double s : {0.0, 0.17, 0.5, 0.93, 1.0}) {
    ChainState st = child.eval(s);
    CHECK(st.X == Catch::Approx(10.0 * s - 0.3).margin(1e-12));
    CHECK(st.Y == Catch::Approx(s).margin(1e-15));
    CHECK(st.vy / st.vx == Catch::Approx(0.1).margin(1e-15));
  }
  // First-branch height above x' is (x' + 0.3) / 10 for x' in [0, 0.7).
  CHECK(child.height_at(CircleValue(0.0)) == Catch::Approx(0.03));
  CHECK(child.height_at(CircleValue(0.65)) == Catch::Approx(0.095));
  CHECK(child.height_at(CircleValue(0.8)) == Catch::Approx(0.01));

  for (double t : {-0.1, 0.0, 3.14, 9.7})
    CHECK(child.eval(child.invert(t)).X == Catch::Approx(t).margin(1e-10));
  CHECK_THROWS_AS(child.invert(9.9), std::domain_error);
  CHECK_THROWS_AS(child.invert(-0.5), std::domain_error);

  // Constant stretch: the disintegration density ratio is exactly 1.
  double r = density_ratio(child, child.point_at(0.2), child.point_at(0.8));
  CHECK(r == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("splitting the linear circle gives ten integer-anchored pieces",
          "[curve]") {
  auto seq = linear_seq(3);
  HorizontalCurve circle = flat_circle(seq, 1, 0.3);
  CrossingDecomposition dec = full_crossing_split(circle, seq->stage(1));

  REQUIRE(dec.pieces.size() == 10);
  CHECK(dec.child_count == 10);
  CHECK_FALSE(dec.subsampled);
  CHECK(dec.excised_measure <= 1e-12);
  CHECK(dec.excised_arcs.empty());
  CHECK(dec.source_measure == Catch::Approx(1.0));

  double held = 0.0;
  for (std::size_t i = 0; i < dec.pieces.size(); ++i) {
    const HorizontalCurve& p = dec.pieces[i];
    CHECK(p.fully_crossing());
    CHECK(p.domain_lo() ==
          Catch::Approx(std::round(p.domain_lo())).margin(1e-9));
    CHECK(p.domain_length() == Catch::Approx(1.0).margin(1e-9));
    CHECK(p.seed_lo() ==
          Catch::Approx((static_cast<double>(i) + 0.3) / 10.0).margin(1e-10));
    CHECK(dec.piece_source_measure[i] == Catch::Approx(0.1).margin(1e-12));
    held += dec.piece_source_measure[i];

    double prev = p.eval(p.seed_lo()).X;
    for (int j = 1; j <= 50; ++j) {
      double s = p.seed_lo() + (p.seed_hi() - p.seed_lo()) * j / 50.0;
      double x = p.eval(s).X;
      REQUIRE(x > prev);
      prev = x;
    }
    DistortionReport rep = tangent_distortion(p, 16, 11 + i);
    CHECK(rep.max_log_ratio <= 1e-12);
  }
  CHECK(held + dec.excised_measure == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("iterated linear split matches the lift-arithmetic ledger",
          "[curve]") {
  LinearOracle oracle = linear_split_oracle();
  auto seq = linear_seq(3);
  HorizontalCurve circle = flat_circle(seq, 1, 0.3);
  IteratedSplit it = iterate_crossing_split(circle, 1, 3);

  REQUIRE(it.stage_child_count.size() == 3);
  CHECK(it.stage_child_count[0] == oracle.counts[0]);
  CHECK(it.stage_child_count[1] == oracle.counts[1]);
  CHECK(it.stage_child_count[2] == oracle.counts[2]);
  CHECK(static_cast<std::int64_t>(it.pieces.size()) == oracle.counts[2]);
  CHECK_FALSE(it.subsampled);
  CHECK(it.excised_exact);
  CHECK(oracle.counts[1] == 89);

  for (int s = 0; s < 3; ++s)
    CHECK(it.stage_excised[s] ==
          Catch::Approx(oracle.excised[s]).margin(1e-12));
  CHECK(it.surviving_measure + it.excised_measure ==
        Catch::Approx(1.0).margin(1e-10));
  double held = 0.0;
  for (double w : it.piece_source_measure) held += w;
  CHECK(held == Catch::Approx(it.surviving_measure).margin(1e-10));

  // Composed lift of every third-stage piece is X3(s) = 980 s - 29.7.
  for (std::size_t i = 0; i < it.pieces.size(); i += 97) {
    const HorizontalCurve& p = it.pieces[i];
    CHECK(p.fully_crossing());
    CHECK(p.domain_length() == Catch::Approx(1.0).margin(1e-8));
    double s = 0.5 * (p.seed_lo() + p.seed_hi());
    CHECK(p.eval(s).X == Catch::Approx(980.0 * s - 29.7).margin(1e-9));
  }

  CHECK_THROWS_AS(iterate_crossing_split(circle, 2, 3), std::invalid_argument);
  IteratedSplit none = iterate_crossing_split(circle, 1, 0);
  CHECK(none.pieces.size() == 1);
  CHECK(none.excised_measure == 0.0);
}

TEST_CASE("piece budget subsampling keeps the ledger exact one stage deep",
          "[curve]") {
  LinearOracle oracle = linear_split_oracle();
  auto seq = linear_seq(3);
  HorizontalCurve circle = flat_circle(seq, 1, 0.3);
  IteratedSplit it = iterate_crossing_split(circle, 1, 3, 50);

  CHECK(it.subsampled);
  CHECK_FALSE(it.excised_exact);
  CHECK(it.stage_child_count[0] == 10);
  CHECK(it.stage_child_count[1] == 89);
  // Stage 2 is the first subsampled stage: every parent is still split, so
  // its excised mass is exact.
  CHECK(it.stage_excised[0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(it.stage_excised[1] ==
        Catch::Approx(oracle.excised[1]).margin(1e-12));
  CHECK(it.pieces.size() <= 60);
  // The ledger telescopes by construction even when excision is estimated.
  CHECK(it.surviving_measure + it.excised_measure ==
        Catch::Approx(1.0).margin(1e-12));
  double held = 0.0;
  for (double w : it.piece_source_measure) held += w;
  CHECK(held <= it.surviving_measure + 1e-12);
}

TEST_CASE("trig transform obeys the slope and curvature recursions",
          "[curve]") {
  const double L = 1e4, eta = 0.75;
  auto seq = trig_seq(L, 3, eta);
  HorizontalCurve segment(seq, 1, 0.3, 0.31, SeedGraph::constant(0.45));
  HorizontalCurve child = graph_transform_step(segment, seq->stage(1));

  CHECK(child.slope_bound() <= 0.00178);
  CHECK(child.slope_bound() == Catch::Approx(1.0 / (2.0 * std::pow(L, eta))));
  double k0 = 2.0 * std::numbers::pi + 4.0 * std::numbers::pi * std::numbers::pi +
              2.0 / L;
  CHECK(child.curvature_bound() <= 2.0 * k0 * std::pow(L, 1.0 - 3.0 * eta));
  CHECK(child.domain_length() >= 100.0);
  CHECK(child.fully_crossing());

  // f' < 0 on this segment, so the lift is decreasing; inversion still works.
  CHECK(child.eval(0.3).X > child.eval(0.31).X);
  double prev = child.eval(0.3).X;
  for (int j = 1; j <= 1000; ++j) {
    double s = 0.3 + 0.01 * j / 1000.0;
    double x = child.eval(s).X;
    REQUIRE(x < prev);
    prev = x;
  }
  StreamRng rng(23, 0);
  for (int i = 0; i < 200; ++i) {
    double t = rng.uniform(child.domain_lo(), child.domain_hi());
    double s = child.invert(t);
    REQUIRE(child.eval(s).X == Catch::Approx(t).margin(1e-8 * (1.0 + std::fabs(t))));
    REQUIRE(std::fabs(child.eval(s).slope()) <= child.slope_bound() * 1.05);
  }
}

TEST_CASE("random off-strip segments contract and flatten", "[curve]") {
  const double L = 1e4, eta = 0.75;
  auto seq = trig_seq(L, 2, eta);
  const BadSet& bs = seq->bad(1);
  StreamRng rng(29, 0);
  int done = 0;
  while (done < 50) {
    double a = rng.uniform();
    double len = rng.uniform(1e-4, 0.02);
    bool clear = true;
    for (int j = 0; j <= 8; ++j)
      if (bs.contains(a + len * j / 8.0)) clear = false;
    if (!clear || bs.distance(a) < 1e-3 || bs.distance(a + len) < 1e-3)
      continue;
    ++done;
    HorizontalCurve seg(seq, 1, a, a + len,
                        SeedGraph::constant(rng.uniform()));
    HorizontalCurve child = graph_transform_step(seg, seq->stage(1));
    double flat_cap = std::pow(L, -eta);
    for (int j = 0; j <= 10; ++j) {
      double s = a + len * j / 10.0;
      ChainState st = child.eval(s);
      REQUIRE(std::fabs(st.slope()) <= flat_cap);
      // Horizontal contraction of the pullback.
      REQUIRE(1.0 / std::fabs(st.vx) <= flat_cap);
    }
  }
}

TEST_CASE("degenerate splits: short segments and point seeds", "[curve]") {
  const double L = 1e4;
  auto seq = trig_seq(L, 2);

  HorizontalCurve tiny(seq, 1, 0.3, 0.3 + 1e-6, SeedGraph::constant(0.2));
  CrossingDecomposition dec = full_crossing_split(tiny, seq->stage(1));
  CHECK(dec.pieces.empty());
  CHECK(dec.child_count == 0);
  CHECK(dec.excised_measure ==
        Catch::Approx(dec.source_measure).margin(1e-15));
  CHECK_FALSE(dec.excised_arcs.empty());

  HorizontalCurve point(seq, 1, 0.3, 0.3, SeedGraph::constant(0.4));
  HorizontalCurve moved = graph_transform_step(point, seq->stage(1));
  TorusPoint image = moved.point_at(0.3);
  TorusPoint direct = apply_forward(seq->stage(1), TorusPoint(0.3, 0.4));
  CHECK(image.x.v == Catch::Approx(direct.x.v).margin(1e-9));
  CHECK(image.y.v == Catch::Approx(direct.y.v).margin(1e-12));
  CrossingDecomposition pdec = full_crossing_split(point, seq->stage(1));
  CHECK(pdec.pieces.empty());
  CHECK(pdec.excised_measure == 0.0);
}

TEST_CASE("full trig circle: excision bound and mass ledger", "[curve]") {
  const double L = 1e4, eta = 0.75;
  auto seq = trig_seq(L, 2, eta);
  HorizontalCurve circle = flat_circle(seq, 1, 0.4);
  CrossingDecomposition dec = full_crossing_split(circle, seq->stage(1));

  REQUIRE(dec.pieces.size() > 1000);
  CHECK(dec.child_count == static_cast<std::int64_t>(dec.pieces.size()));
  CHECK_FALSE(dec.subsampled);

  double strip_mass = 0.0;
  for (const CircleArc& a : seq->bad(1).strips) strip_mass += a.length;
  double m0 = static_cast<double>(seq->critical(1).roots.size());
  double bound = 10.0 * (m0 * 4.0 * seq->k1() * std::pow(L, eta - 1.0) +
                         2.0 * std::pow(L, -eta));
  CHECK(dec.excised_measure >= strip_mass - 1e-9);
  CHECK(dec.excised_measure <= bound);

  double held = 0.0;
  for (double w : dec.piece_source_measure) held += w;
  CHECK(held + dec.excised_measure ==
        Catch::Approx(dec.source_measure).margin(1e-10));

  // The gap through the parameter seam is split as one component, so some
  // pieces use the extended periodic parametrization.
  bool past_seam = false;
  for (const auto& p : dec.pieces) past_seam = past_seam || p.seed_hi() > 1.0;
  CHECK(past_seam);

  std::vector<std::size_t> edge = boundary_piece_indices(dec);
  CHECK(edge.size() >= 2);

  StreamRng rng(31, 0);
  for (int i = 0; i < 60; ++i) {
    const auto& p = dec.pieces[static_cast<std::size_t>(
        rng.uniform(0.0, static_cast<double>(dec.pieces.size()) - 0.5))];
    REQUIRE(p.fully_crossing());
    double s = rng.uniform(p.seed_lo(), p.seed_hi());
    REQUIRE(std::fabs(p.eval(s).slope()) <= std::pow(L, -eta));
  }
}

TEST_CASE("graph transform preconditions are enforced", "[curve]") {
  const double L = 1e4;
  auto seq = trig_seq(L, 2);
  HorizontalCurve circle = flat_circle(seq, 1, 0.4);
  CHECK_THROWS_AS(graph_transform_step(circle, seq->stage(1)),
                  std::logic_error);

  double root = seq->critical(1).roots.front();
  HorizontalCurve overlapping(seq, 1, root - 0.001, root + 0.001,
                              SeedGraph::constant(0.2));
  CHECK_THROWS_AS(graph_transform_step(overlapping, seq->stage(1)),
                  std::logic_error);

  Stage foreign{1, 123.0, &seq->family()};
  HorizontalCurve seg(seq, 1, 0.3, 0.31, SeedGraph::constant(0.2));
  CHECK_THROWS_AS(graph_transform_step(seg, foreign), std::invalid_argument);

  const double tau = 2.0 * std::numbers::pi;
  SeedGraph prof = SeedGraph::profile(
      [tau](double s) { return 0.01 * std::sin(tau * s); },
      [tau](double s) { return 0.01 * tau * std::cos(tau * s); }, 0.01 * tau,
      0.01 * tau * tau, false);
  HorizontalCurve bounded(seq, 1, 0.3, 0.31, prof);
  CHECK_THROWS_AS(bounded.restricted(0.29, 0.31), std::domain_error);
  CHECK_NOTHROW(flat_circle(seq, 1, 0.0).restricted(0.9, 1.2));
}

TEST_CASE("curve integral agrees with closed forms", "[curve]") {
  auto seq = linear_seq(2);
  HorizontalCurve circle = flat_circle(seq, 1, 0.4);
  Observable cx = make_observable("cos_x");
  Observable cy = make_observable("cos_y");
  CHECK(curve_integral(circle, cx) == Catch::Approx(0.0).margin(1e-9));
  CHECK(curve_integral(circle, cy) ==
        Catch::Approx(std::cos(2.0 * std::numbers::pi * 0.4)).margin(1e-9));

  HorizontalCurve child =
      graph_transform_step(flat_circle(seq, 1, 0.3), seq->stage(1));
  double arc = std::sqrt(1.0 + 0.01);
  CHECK(curve_integral(child, [](double, double) { return 1.0; }) ==
        Catch::Approx(10.0 * arc).margin(1e-7));
  CHECK(curve_integral(child, cy) == Catch::Approx(0.0).margin(1e-7));
}

TEST_CASE("equidistribution report fields are consistent", "[curve]") {
  const double L = 1e3, eta = 0.75;
  auto seq = trig_seq(L, 3, eta);
  HorizontalCurve circle = flat_circle(seq, 1, 0.35);
  Observable psi = make_observable("cos_x_plus_y");
  EquidistributionReport rep =
      curve_equidistribution_error(circle, psi, 2, 20000, 5);

  CHECK(rep.curve_length == Catch::Approx(1.0));
  CHECK(rep.psi_mean == Catch::Approx(0.0).margin(1e-10));
  CHECK(rep.std_error > 0.0);
  CHECK(rep.measured >= 0.0);
  double shape = std::pow(L, -psi.alpha * (1.0 - eta) / (psi.alpha + 2.0)) +
                 std::pow(L, 1.0 - 2.0 * eta) + std::pow(L, -1.0 + eta);
  CHECK(rep.bound_shape == Catch::Approx(shape).margin(1e-12));

  HorizontalCurve seg(seq, 1, 0.3, 0.31, SeedGraph::constant(0.2));
  CHECK_THROWS_AS(curve_equidistribution_error(seg, psi, 2, 100, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(curve_equidistribution_error(circle, psi, 0, 100, 1),
                  std::invalid_argument);
}

TEST_CASE("density ratio rejects points off the piece", "[curve]") {
  auto seq = linear_seq(2);
  HorizontalCurve child =
      graph_transform_step(flat_circle(seq, 1, 0.3), seq->stage(1));
  TorusPoint on = child.point_at(0.4);
  TorusPoint off(on.x.v, wrap_unit(on.y.v + 0.37));
  CHECK_THROWS_AS(density_ratio(child, on, off), std::domain_error);
}
