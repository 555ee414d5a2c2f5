#pragma once

#include <cmath>

namespace torusmix {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  double norm() const { return std::hypot(x, y); }
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }

/* Row-major 2x2 matrix. */
struct Mat2 {
  double a = 1.0, b = 0.0;
  double c = 0.0, d = 1.0;

  double det() const { return a * d - b * c; }

  Vec2 apply(Vec2 v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }

  Mat2 mul(const Mat2& r) const {
    return {a * r.a + b * r.c, a * r.b + b * r.d,
            c * r.a + d * r.c, c * r.b + d * r.d};
  }

  double frobenius() const { return std::sqrt(a * a + b * b + c * c + d * d); }

  /* Largest singular value (closed form via the Gram matrix). */
  double spectral_norm() const {
    double g11 = a * a + c * c;
    double g12 = a * b + c * d;
    double g22 = b * b + d * d;
    double tr = g11 + g22;
    double disc = std::sqrt(std::max(0.0, (g11 - g22) * (g11 - g22) + 4.0 * g12 * g12));
    return std::sqrt(0.5 * (tr + disc));
  }

  Mat2 scaled(double s) const { return {s * a, s * b, s * c, s * d}; }
};

}  // namespace torusmix
