#pragma once

#include "pedoop/data.hpp"
#include "pedoop/pkpd.hpp"
#include "pedoop/random.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace pedoop {

// Data-generating law of the patient PK parameters and measurement noise:
// V ~ Gamma(v_shape, v_rate), k ~ Gamma(k_shape, k_rate),
// log X_j ~ N(log(d / V) - k t_j, sigma^2).
struct PkGenerator {
  double v_shape = 4.0;
  double v_rate = 1.0;
  double k_shape = 3.0;
  double k_rate = 1.0;
  double sigma = 1.0;
  bool operator==(const PkGenerator&) const = default;
};

struct Scenario {
  std::string label;
  DoseGrid grid;
  std::vector<double> true_tox;
  std::vector<double> true_eff;
  PkGenerator pk;
  std::vector<double> sample_times{1, 3, 5, 7, 12, 24};
  double control_tox = 0.17;
  double control_eff = 0.2;

  void validate() const {
    auto prob = [](double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; };
    if (true_tox.size() != grid.size() || true_eff.size() != grid.size()) {
      throw std::invalid_argument("Scenario " + label + ": truth vectors must match the dose grid");
    }
    for (std::size_t d = 0; d < grid.size(); ++d) {
      if (!prob(true_tox[d]) || !prob(true_eff[d])) {
        throw std::invalid_argument("Scenario " + label + ": probabilities must lie in [0, 1]");
      }
    }
    if (!prob(control_tox) || !prob(control_eff)) {
      throw std::invalid_argument("Scenario " + label + ": control probabilities must lie in [0, 1]");
    }
    if (!(pk.v_shape > 0 && pk.v_rate > 0 && pk.k_shape > 0 && pk.k_rate > 0 && pk.sigma >= 0)) {
      throw std::invalid_argument("Scenario " + label + ": PK generator parameters must be positive");
    }
    for (std::size_t j = 0; j < sample_times.size(); ++j) {
      if (!(sample_times[j] >= 0.0) || (j > 0 && !(sample_times[j] > sample_times[j - 1]))) {
        throw std::invalid_argument("Scenario " + label + ": sample times must be increasing");
      }
    }
  }
  bool operator==(const Scenario&) const = default;
};

struct GeneratedPatient {
  PatientRecord record;
  PatientPk pk;  // the drawn V_i, k_i
};

// Simulated patient at grid index `dose`. DLT and response are independent
// Bernoulli draws with the scenario's true probabilities.
inline GeneratedPatient generate_patient_detailed(const Scenario& s, std::size_t dose, Rng& rng) {
  GeneratedPatient g;
  auto& p = g.record;
  p.dose_index = dose;
  g.pk.v = gamma_rate(rng, s.pk.v_shape, s.pk.v_rate);
  g.pk.k = gamma_rate(rng, s.pk.k_shape, s.pk.k_rate);
  const double log_c0 = std::log(s.grid.amount(dose)) - std::log(g.pk.v);
  p.times = s.sample_times;
  p.log_concentrations.reserve(p.times.size());
  for (double t : p.times) {
    const double noise = s.pk.sigma > 0.0 ? s.pk.sigma * standard_normal(rng) : 0.0;
    p.log_concentrations.push_back(log_c0 - g.pk.k * t + noise);
  }
  p.dlt = bernoulli(rng, s.true_tox[dose]);
  p.efficacy = bernoulli(rng, s.true_eff[dose]);
  return g;
}

inline PatientRecord generate_patient(const Scenario& s, std::size_t dose, Rng& rng) {
  return generate_patient_detailed(s, dose, rng).record;
}

inline PatientRecord generate_patient(const Scenario& s, std::size_t dose, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return generate_patient(s, dose, rng);
}

}  // namespace pedoop
