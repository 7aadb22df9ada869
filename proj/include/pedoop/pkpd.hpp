#pragma once

// One-compartment PK model, dose-level AUC with a logit toxicity link, and a
// sigmoid-Emax cumulative drug effect with an exponential efficacy link.
//
// All dose arguments are physical amounts (mass units), never grid indices.

#include "pedoop/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pedoop {

// Shape parameters must clear 1 by this margin; the closed forms divide by
// (shape - 1).
inline constexpr double kShapeMargin = 1e-9;

// gamma * alpha_k within this distance of 2 selects the arctan closed form.
inline constexpr double kClosedFormTolerance = 1e-12;

namespace detail {

inline void require(bool ok, const char* what) {
  if (!ok) throw std::domain_error(what);
}

inline bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace detail

inline double expit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// Ordered set of dose amounts.
class DoseGrid {
 public:
  DoseGrid() = default;
  explicit DoseGrid(std::vector<double> amounts) : amounts_(std::move(amounts)) {
    if (amounts_.size() < 2) throw std::invalid_argument("DoseGrid: need at least two doses");
    for (std::size_t i = 0; i < amounts_.size(); ++i) {
      if (!detail::finite_positive(amounts_[i])) {
        throw std::invalid_argument("DoseGrid: dose amounts must be positive and finite");
      }
      if (i > 0 && !(amounts_[i] > amounts_[i - 1])) {
        throw std::invalid_argument("DoseGrid: dose amounts must be strictly increasing");
      }
    }
  }

  std::size_t size() const { return amounts_.size(); }
  double amount(std::size_t index) const { return amounts_.at(index); }
  std::span<const double> amounts() const { return amounts_; }

  std::optional<std::size_t> index_of(double amount) const {
    auto it = std::find(amounts_.begin(), amounts_.end(), amount);
    if (it == amounts_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - amounts_.begin());
  }

  bool operator==(const DoseGrid&) const = default;

 private:
  std::vector<double> amounts_;
};

// Gamma(shape, rate) population laws for the patient volume V and
// elimination rate k.
struct PkPopulation {
  double alpha_v = 5.0;
  double lambda_v = 1.0;
  double alpha_k = 4.0;
  double lambda_k = 1.0;

  bool valid() const {
    return std::isfinite(alpha_v) && std::isfinite(alpha_k) && alpha_v > 1.0 + kShapeMargin &&
           alpha_k > 1.0 + kShapeMargin && detail::finite_positive(lambda_v) &&
           detail::finite_positive(lambda_k);
  }
  void validate() const {
    detail::require(valid(), "PkPopulation: need alpha_v > 1, alpha_k > 1, positive rates");
  }
  bool operator==(const PkPopulation&) const = default;
};

struct PatientPk {
  double v = 1.0;  // volume of distribution
  double k = 1.0;  // elimination rate
};

// logit(p_d) = beta0 + beta1 * log AUC(d)
struct ToxicityLink {
  double beta0 = -3.0;
  double beta1 = 1.0;
  bool operator==(const ToxicityLink&) const = default;
};

struct PdParams {
  double e_max = 1.0;
  double ed50 = 1.0;
  double gamma = 1.0;  // Hill coefficient
  bool operator==(const PdParams&) const = default;
};

struct ModelParams {
  PkPopulation pk;
  ToxicityLink tox;
  PdParams pd;
  double sigma = 1.0;  // SD of log concentration

  bool valid() const {
    return pk.valid() && std::isfinite(tox.beta0) && detail::finite_positive(tox.beta1) &&
           detail::finite_positive(pd.e_max) && detail::finite_positive(pd.ed50) &&
           detail::finite_positive(pd.gamma) && pd.gamma * pk.alpha_k > 1.0 + kShapeMargin &&
           detail::finite_positive(sigma);
  }
  bool operator==(const ModelParams&) const = default;
};

// c_i(t) = d / V * exp(-k t)
inline double concentration_patient(double dose, const PatientPk& pk, double t) {
  detail::require(detail::finite_positive(dose), "concentration_patient: dose must be > 0");
  detail::require(detail::finite_positive(pk.v) && detail::finite_positive(pk.k),
                  "concentration_patient: V and k must be > 0");
  detail::require(std::isfinite(t) && t >= 0.0, "concentration_patient: t must be >= 0");
  return dose / pk.v * std::exp(-pk.k * t);
}

// Concentration averaged over the population laws of V and k:
// d * lambda_v / (alpha_v - 1) * (lambda_k / (lambda_k + t))^alpha_k
inline double concentration_population(double dose, const PkPopulation& pk, double t) {
  detail::require(detail::finite_positive(dose), "concentration_population: dose must be > 0");
  pk.validate();
  detail::require(t >= 0.0, "concentration_population: t must be >= 0");
  if (std::isinf(t)) return 0.0;
  return dose * pk.lambda_v / (pk.alpha_v - 1.0) *
         std::exp(pk.alpha_k * (std::log(pk.lambda_k) - std::log(pk.lambda_k + t)));
}

// Area under c_i on [0, t_ref]; pass infinity for the full AUC d / (V k).
inline double auc_patient(double dose, const PatientPk& pk,
                          double t_ref = std::numeric_limits<double>::infinity()) {
  detail::require(detail::finite_positive(dose), "auc_patient: dose must be > 0");
  detail::require(detail::finite_positive(pk.v) && detail::finite_positive(pk.k),
                  "auc_patient: V and k must be > 0");
  detail::require(!std::isnan(t_ref) && t_ref >= 0.0, "auc_patient: t_ref must be >= 0");
  const double full = dose / (pk.v * pk.k);
  if (std::isinf(t_ref)) return full;
  return -full * std::expm1(-pk.k * t_ref);
}

inline double log_auc_population(double dose, const PkPopulation& pk) {
  detail::require(detail::finite_positive(dose), "auc_population: dose must be > 0");
  pk.validate();
  return std::log(dose) + std::log(pk.lambda_v) + std::log(pk.lambda_k) -
         std::log(pk.alpha_v - 1.0) - std::log(pk.alpha_k - 1.0);
}

// d * lambda_v * lambda_k / ((alpha_v - 1)(alpha_k - 1))
inline double auc_population(double dose, const PkPopulation& pk) {
  detail::require(detail::finite_positive(dose), "auc_population: dose must be > 0");
  pk.validate();
  return dose * (pk.lambda_v / (pk.alpha_v - 1.0)) * (pk.lambda_k / (pk.alpha_k - 1.0));
}

inline double toxicity_prob_from_auc(double auc, const ToxicityLink& tox) {
  detail::require(detail::finite_positive(auc), "toxicity_prob: AUC must be > 0");
  return expit(tox.beta0 + tox.beta1 * std::log(auc));
}

inline double toxicity_prob(double dose, const PkPopulation& pk, const ToxicityLink& tox) {
  return expit(tox.beta0 + tox.beta1 * log_auc_population(dose, pk));
}

// Sigmoid Emax intensity at concentration c.
inline double emax_intensity(double c, const PdParams& pd) {
  detail::require(c >= 0.0, "emax_intensity: concentration must be >= 0");
  if (c == 0.0) return 0.0;
  // E c^g / (ED50^g + c^g) = E / (1 + (ED50/c)^g)
  return pd.e_max / (1.0 + std::exp(pd.gamma * (std::log(pd.ed50) - std::log(c))));
}

inline double effect_intensity(double dose, const PkPopulation& pk, const PdParams& pd,
                               double t) {
  return emax_intensity(concentration_population(dose, pk, t), pd);
}

// log C(d), with C(d) = (d lambda_v lambda_k^alpha_k / (alpha_v - 1))^gamma / ED50^gamma.
inline double log_effect_scale(double dose, const PkPopulation& pk, const PdParams& pd) {
  return pd.gamma * (std::log(dose) + std::log(pk.lambda_v) + pk.alpha_k * std::log(pk.lambda_k) -
                     std::log(pk.alpha_v - 1.0) - std::log(pd.ed50));
}

namespace detail {

inline void check_effect_inputs(double dose, const PkPopulation& pk, const PdParams& pd) {
  require(std::isfinite(dose) && dose >= 0.0, "cumulative_effect: dose must be >= 0");
  pk.validate();
  require(finite_positive(pd.e_max) && finite_positive(pd.ed50) && finite_positive(pd.gamma),
          "cumulative_effect: Emax, ED50 and gamma must be > 0");
  if (!(pd.gamma * pk.alpha_k > 1.0 + kShapeMargin)) {
    throw std::domain_error("cumulative_effect: gamma * alpha_k <= 1, effect integral diverges");
  }
}

}  // namespace detail

// eta(d) for gamma * alpha_k == 2:
// sqrt(C) Emax (pi/2 - atan(lambda_k / sqrt(C)))
inline double cumulative_effect_closed_form(double dose, const PkPopulation& pk,
                                            const PdParams& pd) {
  detail::check_effect_inputs(dose, pk, pd);
  if (std::abs(pd.gamma * pk.alpha_k - 2.0) > kClosedFormTolerance) {
    throw std::domain_error("cumulative_effect_closed_form: requires gamma * alpha_k == 2");
  }
  if (dose == 0.0) return 0.0;
  const double root_c = std::exp(0.5 * log_effect_scale(dose, pk, pd));
  // pi/2 - atan(x) == atan(1/x) for x > 0, which keeps precision when x is large.
  return root_c * pd.e_max * std::atan(root_c / pk.lambda_k);
}

// eta(d) by adaptive quadrature, valid for any gamma * alpha_k = m > 1.
//
// With x = lambda_k + t and y = x^(1-m) the improper integral
//   C Emax int_{lambda_k}^inf dx / (x^m + C)
// becomes the proper integral
//   C Emax / (m - 1) int_0^{lambda_k^(1-m)} dy / (1 + C y^(m/(m-1)))
// whose integrand is bounded by 1.
inline double cumulative_effect_quadrature(double dose, const PkPopulation& pk,
                                           const PdParams& pd) {
  detail::check_effect_inputs(dose, pk, pd);
  if (dose == 0.0) return 0.0;
  const double m = pd.gamma * pk.alpha_k;
  const double p = m / (m - 1.0);
  const double log_c = log_effect_scale(dose, pk, pd);
  const double upper = std::exp((1.0 - m) * std::log(pk.lambda_k));
  auto integrand = [&](double y) {
    if (y <= 0.0) return 1.0;
    const double e = log_c + p * std::log(y);
    return e > 700.0 ? 0.0 : 1.0 / (1.0 + std::exp(e));
  };
  // The integrand drops from ~1 to ~0 around y0 = C^(-1/p); split there.
  const double y0 = std::exp(-log_c / p);
  double integral = 0.0;
  if (y0 > 0.0 && y0 < upper) {
    integral = integrate_gk(integrand, 0.0, y0).value + integrate_gk(integrand, y0, upper).value;
  } else {
    integral = integrate_gk(integrand, 0.0, upper).value;
  }
  return std::exp(log_c) * pd.e_max / (m - 1.0) * integral;
}

// Closed form when gamma * alpha_k == 2, quadrature otherwise.
inline double cumulative_effect(double dose, const PkPopulation& pk, const PdParams& pd) {
  detail::check_effect_inputs(dose, pk, pd);
  if (std::abs(pd.gamma * pk.alpha_k - 2.0) <= kClosedFormTolerance) {
    PdParams exact = pd;
    exact.gamma = 2.0 / pk.alpha_k;
    return cumulative_effect_closed_form(dose, pk, exact);
  }
  return cumulative_effect_quadrature(dose, pk, pd);
}

// h(eta) = 1 - exp(-eta)
inline double efficacy_link(double eta) {
  detail::require(!std::isnan(eta) && eta >= 0.0, "efficacy_link: eta must be >= 0");
  return -std::expm1(-eta);
}

inline double efficacy_prob(double dose, const PkPopulation& pk, const PdParams& pd) {
  return efficacy_link(cumulative_effect(dose, pk, pd));
}

// Per-dose (p_d, q_d) for one parameter draw.
struct DoseProbabilities {
  std::vector<double> tox;
  std::vector<double> eff;
};

inline DoseProbabilities dose_probabilities(const DoseGrid& grid, const ModelParams& theta) {
  DoseProbabilities out;
  out.tox.reserve(grid.size());
  out.eff.reserve(grid.size());
  for (double d : grid.amounts()) {
    out.tox.push_back(toxicity_prob(d, theta.pk, theta.tox));
    out.eff.push_back(efficacy_prob(d, theta.pk, theta.pd));
  }
  return out;
}

}  // namespace pedoop
