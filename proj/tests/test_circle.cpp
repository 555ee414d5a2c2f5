#include <catch2/catch_amalgamated.hpp>

#include "torusmix/circle.hpp"
#include "torusmix/linalg.hpp"
#include "torusmix/rng.hpp"

using namespace torusmix;

TEST_CASE("wrap maps representatives into [0,1)", "[circle]") {
  CHECK(wrap_unit(1.25) == 0.25);
  CHECK(wrap_unit(-0.25) == 0.75);
  CHECK(wrap_unit(3.0) == 0.0);
  CHECK(wrap_unit(0.0) == 0.0);
  // Rounding can push x - floor(x) onto 1.0 exactly; the convention is 0.0.
  CHECK(wrap_unit(-1e-17) == 0.0);
  CHECK(wrap_unit(1.0 - 1e-17) < 1.0);

  StreamRng rng(7, 0);
  for (int i = 0; i < 100000; ++i) {
    double x = rng.uniform(-1e3, 1e3);
    double w = wrap_unit(x);
    REQUIRE(w >= 0.0);
    REQUIRE(w < 1.0);
    REQUIRE(wrap_unit(w) == w);
  }
}

TEST_CASE("circle distance is a metric with rotation invariance", "[circle]") {
  CHECK(circle_distance(0.1, 0.9) == Catch::Approx(0.2).margin(1e-15));
  CHECK(circle_distance(0.0, 0.5) == 0.5);
  CHECK(circle_distance(0.25, 0.25) == 0.0);

  StreamRng rng(11, 0);
  for (int i = 0; i < 20000; ++i) {
    double a = rng.uniform(), b = rng.uniform(), t = rng.uniform(-5.0, 5.0);
    double d = circle_distance(a, b);
    REQUIRE(d <= 0.5 + 1e-15);
    REQUIRE(circle_distance(b, a) == d);
    REQUIRE(std::fabs(circle_distance(a + t, b + t) - d) <= 1e-14);
  }
}

TEST_CASE("arc clip produces the intersection as sub-arcs", "[circle]") {
  // Wrapping arc meets a window only through its wrapped lift.
  auto r = arc_clip(CircleArc(0.9, 0.3), CircleArc(0.0, 0.15));
  REQUIRE(r.size() == 1);
  CHECK(r[0].start == Catch::Approx(0.0).margin(1e-15));
  CHECK(r[0].length == Catch::Approx(0.15).margin(1e-15));

  // Window straddling the arc's wrapped end splits into two components.
  r = arc_clip(CircleArc(0.5, 0.9), CircleArc(0.35, 0.2));
  REQUIRE(r.size() == 2);
  double total = arcs_total_length(r);
  CHECK(total == Catch::Approx(0.1).margin(1e-12));

  // Full-circle inputs.
  r = arc_clip(CircleArc(0.0, 1.0), CircleArc(0.7, 0.2));
  REQUIRE(r.size() == 1);
  CHECK(r[0].length == Catch::Approx(0.2));
  r = arc_clip(CircleArc(0.7, 0.2), CircleArc(0.0, 1.0));
  REQUIRE(r.size() == 1);
  CHECK(r[0].length == Catch::Approx(0.2));

  // Disjoint.
  r = arc_clip(CircleArc(0.1, 0.1), CircleArc(0.4, 0.1));
  CHECK(r.empty());
}

TEST_CASE("arc clip respects membership on random inputs", "[circle]") {
  StreamRng rng(23, 0);
  for (int trial = 0; trial < 2000; ++trial) {
    CircleArc arc(rng.uniform(), rng.uniform(0.0, 1.0));
    CircleArc win(rng.uniform(), rng.uniform(0.0, 1.0));
    auto parts = arc_clip(arc, win);
    double total = arcs_total_length(parts);
    REQUIRE(total <= std::min(arc.length, win.length) + 1e-12);
    for (const auto& piece : parts) {
      for (double t : {0.25, 0.75}) {
        double x = wrap_unit(piece.start + t * piece.length);
        REQUIRE(arc.contains(x));
        REQUIRE(win.contains(x));
      }
    }
    // Points in the intersection are covered by some returned piece.
    for (int s = 0; s < 20; ++s) {
      double x = wrap_unit(arc.start + rng.uniform() * arc.length);
      // Stay clear of endpoints where closed/open conventions differ.
      if (!win.contains(x)) continue;
      double d_end = std::min(circle_distance(x, arc.start),
                              circle_distance(x, arc.start + arc.length));
      double d_wend = std::min(circle_distance(x, win.start),
                               circle_distance(x, win.start + win.length));
      if (std::min(d_end, d_wend) < 1e-9) continue;
      bool covered = false;
      for (const auto& piece : parts) covered = covered || piece.contains(x);
      REQUIRE(covered);
    }
  }
}

TEST_CASE("2x2 helpers", "[circle]") {
  Mat2 m{3.0, 0.0, 0.0, 2.0};
  CHECK(m.det() == 6.0);
  CHECK(m.spectral_norm() == Catch::Approx(3.0));
  Mat2 j{5.0, -1.0, 1.0, 0.0};
  CHECK(j.det() == 1.0);
  Vec2 v = j.apply({1.0, 0.1});
  CHECK(v.x == Catch::Approx(4.9));
  CHECK(v.y == 1.0);
}
