#pragma once

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pedoop {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
};

// Adaptive 15-point Gauss-Kronrod on a finite interval [a, b]. The
// requested tolerance is relative; an absolute floor of `abs_tol` keeps
// near-zero integrals from driving the subdivision to max depth.
template <class F>
QuadratureResult integrate_gk(F&& f, double a, double b, double rel_tol = 1e-10,
                              double abs_tol = 1e-300, unsigned max_depth = 15) {
  if (!(std::isfinite(a) && std::isfinite(b)) || b < a) {
    throw std::domain_error("integrate_gk: interval must be finite with a <= b");
  }
  if (a == b) return {};
  double err = 0.0;
  double l1 = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      f, a, b, max_depth, rel_tol, &err, &l1);
  if (!std::isfinite(v)) throw std::domain_error("integrate_gk: non-finite integral");
  if (err > rel_tol * std::abs(v) && err > abs_tol) {
    // boost returns its best estimate when the tolerance is not met; accept
    // it only when the error estimate is still small in absolute terms.
    if (err > 1e-6 * std::max(1.0, std::abs(v))) {
      throw std::domain_error("integrate_gk: tolerance not reached");
    }
  }
  return {v, err};
}

// Integral over [a, inf) by exp-sinh quadrature, which copes with slowly
// (algebraically) decaying tails.
template <class F>
QuadratureResult integrate_half_line(F&& f, double a, double rel_tol = 1e-12) {
  if (!std::isfinite(a)) throw std::domain_error("integrate_half_line: a must be finite");
  boost::math::quadrature::exp_sinh<double> rule;
  double err = 0.0;
  double l1 = 0.0;
  const double v = rule.integrate([&](double u) { return f(a + u); }, rel_tol, &err, &l1);
  if (!std::isfinite(v)) throw std::domain_error("integrate_half_line: non-finite integral");
  if (err > 1e-6 * std::max(1.0, std::abs(v))) {
    throw std::domain_error("integrate_half_line: tolerance not reached");
  }
  return {v, err};
}

}  // namespace pedoop
