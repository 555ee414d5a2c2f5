#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace torusmix {

/*
 * Test observable on the torus with its Holder data.  alpha is the Holder
 * exponent and holder_norm = sup|phi| + [phi]_alpha; the built-in library
 * carries analytic values.  All built-ins have zero mean.
 */
struct Observable {
  std::string id;
  double alpha = 1.0;
  double holder_norm = 1.0;
  double mean = 0.0;
  std::function<double(double, double)> f;

  bool zero_mean = true;
  bool trig_polynomial = true;
  // Holder data supplied by the caller rather than derived analytically.
  bool declared_only = false;
  // Set when the observable is a known coboundary psi(x) - psi(y).
  std::function<double(double)> coboundary_psi;

  double operator()(double x, double y) const { return f(x, y); }
};

/* User observable with declared (unverified) Holder data. */
inline Observable make_custom_observable(std::string id,
                                         std::function<double(double, double)> f,
                                         double alpha, double holder_norm,
                                         bool zero_mean = false) {
  if (!(alpha > 0.0) || alpha > 1.0)
    throw std::invalid_argument("Holder exponent must lie in (0, 1]");
  if (!(holder_norm > 0.0))
    throw std::invalid_argument("Holder norm must be positive");
  Observable o;
  o.id = std::move(id);
  o.f = std::move(f);
  o.alpha = alpha;
  o.holder_norm = holder_norm;
  o.zero_mean = zero_mean;
  o.trig_polynomial = false;
  o.declared_only = true;
  return o;
}

inline std::vector<std::string> observable_ids() {
  return {"cos_x", "sin_x", "cos_y", "sin_y", "cos_x_plus_y", "sin_x_plus_y",
          "cos_2x", "cos_x_cos_y", "sin_x_sin_y", "cos_x_minus_cos_y"};
}

inline Observable make_observable(const std::string& id) {
  constexpr double tau = 2.0 * std::numbers::pi;
  const double rt2 = std::numbers::sqrt2;
  Observable o;
  o.id = id;
  if (id == "cos_x") {
    o.holder_norm = 1.0 + tau;
    o.f = [](double x, double) { return std::cos(tau * x); };
  } else if (id == "sin_x") {
    o.holder_norm = 1.0 + tau;
    o.f = [](double x, double) { return std::sin(tau * x); };
  } else if (id == "cos_y") {
    o.holder_norm = 1.0 + tau;
    o.f = [](double, double y) { return std::cos(tau * y); };
  } else if (id == "sin_y") {
    o.holder_norm = 1.0 + tau;
    o.f = [](double, double y) { return std::sin(tau * y); };
  } else if (id == "cos_x_plus_y") {
    o.holder_norm = 1.0 + tau * rt2;
    o.f = [](double x, double y) { return std::cos(tau * (x + y)); };
  } else if (id == "sin_x_plus_y") {
    o.holder_norm = 1.0 + tau * rt2;
    o.f = [](double x, double y) { return std::sin(tau * (x + y)); };
  } else if (id == "cos_2x") {
    o.holder_norm = 1.0 + 2.0 * tau;
    o.f = [](double x, double) { return std::cos(2.0 * tau * x); };
  } else if (id == "cos_x_cos_y") {
    o.holder_norm = 1.0 + tau;
    o.f = [](double x, double y) { return std::cos(tau * x) * std::cos(tau * y); };
  } else if (id == "sin_x_sin_y") {
    o.holder_norm = 1.0 + tau;
    o.f = [](double x, double y) { return std::sin(tau * x) * std::sin(tau * y); };
  } else if (id == "cos_x_minus_cos_y") {
    // Exact coboundary: psi(x) - psi(y) with psi = cos(2 pi x).
    o.holder_norm = 2.0 + tau * rt2;
    o.f = [](double x, double y) { return std::cos(tau * x) - std::cos(tau * y); };
    o.coboundary_psi = [](double x) { return std::cos(tau * x); };
  } else {
    throw std::invalid_argument("unknown observable id: " + id);
  }
  return o;
}

}  // namespace torusmix
