#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

namespace torusmix {

struct QuadratureResult {
  double value = 0.0;
  int grid = 0;        // points per axis of the final grid
  bool converged = false;
};

/*
 * Tensor trapezoid rule on the torus.  For periodic integrands the uniform
 * grid mean converges spectrally, so the grid is doubled from `g0` until two
 * successive estimates agree to `tol` (or the per-axis cap is reached; the
 * cap shrinks with dimension to keep the point count bounded).
 */
template <typename Fn>
QuadratureResult integrate_periodic(Fn&& f, int dim, double tol = 1e-10,
                                    int g0 = 16, int g_max = 4096) {
  if (dim == 3) g_max = std::min(g_max, 512);
  auto grid_mean = [&](int G) {
    double sum = 0.0;
    double h = 1.0 / G;
    switch (dim) {
      case 1:
        for (int i = 0; i < G; ++i) sum += f(i * h, 0.0, 0.0);
        return sum / G;
      case 2:
        for (int i = 0; i < G; ++i)
          for (int j = 0; j < G; ++j) sum += f(i * h, j * h, 0.0);
        return sum / (static_cast<double>(G) * G);
      default:
        for (int i = 0; i < G; ++i)
          for (int j = 0; j < G; ++j)
            for (int k = 0; k < G; ++k) sum += f(i * h, j * h, k * h);
        return sum / (static_cast<double>(G) * G * G);
    }
  };

  QuadratureResult res;
  int G = g0;
  double prev = grid_mean(G);
  while (G < g_max) {
    G *= 2;
    double cur = grid_mean(G);
    if (std::fabs(cur - prev) <= tol) {
      res.value = cur;
      res.grid = G;
      res.converged = true;
      return res;
    }
    prev = cur;
  }
  res.value = prev;
  res.grid = G;
  res.converged = false;
  return res;
}

template <typename Fn>
QuadratureResult integrate_1d(Fn&& f, double tol = 1e-10) {
  return integrate_periodic([&](double x, double, double) { return f(x); }, 1, tol);
}

template <typename Fn>
QuadratureResult integrate_2d(Fn&& f, double tol = 1e-10) {
  return integrate_periodic([&](double x, double y, double) { return f(x, y); }, 2, tol);
}

template <typename Fn>
QuadratureResult integrate_3d(Fn&& f, double tol = 1e-10) {
  return integrate_periodic([&](double x, double y, double z) { return f(x, y, z); }, 3, tol);
}

}  // namespace torusmix
