#pragma once

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>
#include <numbers>

namespace pedoop {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_gamma_fn(double x) { return boost::math::lgamma(x); }

inline double gamma_logpdf(double x, double shape, double rate) {
  if (!(x > 0.0) || !std::isfinite(x)) return kNegInf;
  return shape * std::log(rate) - log_gamma_fn(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// Log-normal with parameters on the log scale: log X ~ N(log_mean, log_variance).
inline double lognormal_logpdf(double x, double log_mean, double log_variance) {
  if (!(x > 0.0) || !std::isfinite(x)) return kNegInf;
  const double lx = std::log(x);
  return normal_logpdf(lx, log_mean, std::sqrt(log_variance)) - lx;
}

inline double log_binomial_coefficient(int n, int k) {
  return log_gamma_fn(n + 1.0) - log_gamma_fn(k + 1.0) - log_gamma_fn(n - k + 1.0);
}

// Binomial log-pmf given log p and log(1 - p); callers pass the
// numerically stable forms.
inline double binomial_logpmf(int k, int n, double log_p, double log_1mp) {
  if (n == 0) return 0.0;
  double v = log_binomial_coefficient(n, k);
  if (k > 0) v += k * log_p;
  if (n - k > 0) v += (n - k) * log_1mp;
  return v;
}

}  // namespace pedoop
