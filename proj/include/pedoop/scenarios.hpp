#pragma once

// Published simulation scenarios and matching design presets.

#include "pedoop/scenario.hpp"
#include "pedoop/simulation.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pedoop {

struct PublishedScenario {
  Scenario scenario;
  std::vector<double> printed_utility;   // per dose
  std::optional<double> printed_control_utility;
  int simulation = 0;                    // 1: phase I only, 2: full design
};

inline DoseGrid standard_grid() { return DoseGrid({15, 30, 60, 90, 120}); }

inline std::vector<PublishedScenario> published_scenarios() {
  std::vector<PublishedScenario> out;
  const std::vector<double> sim1_eff{0.12, 0.18, 0.27, 0.33, 0.37};
  const PkGenerator sim1_pk{4, 1, 3, 1, 1};
  auto sim1 = [&](int sc, std::vector<double> tox, std::vector<double> u) {
    Scenario s;
    s.label = "sim1_sc" + std::to_string(sc);
    s.grid = standard_grid();
    s.true_tox = std::move(tox);
    s.true_eff = sim1_eff;
    s.pk = sim1_pk;
    out.push_back({s, std::move(u), std::nullopt, 1});
  };
  sim1(1, {0.17, 0.29, 0.45, 0.55, 0.62}, {0.41, 0.39, 0.38, 0.38, 0.38});
  sim1(2, {0.11, 0.19, 0.31, 0.39, 0.46}, {0.43, 0.43, 0.44, 0.44, 0.44});
  sim1(3, {0.04, 0.09, 0.2, 0.3, 0.39}, {0.46, 0.47, 0.48, 0.48, 0.47});
  sim1(4, {0.11, 0.16, 0.21, 0.24, 0.27}, {0.43, 0.45, 0.48, 0.5, 0.52});

  const std::vector<double> tox_a{0.03, 0.06, 0.17, 0.3, 0.5};
  const std::vector<double> tox_b{0.03, 0.06, 0.09, 0.12, 0.15};
  const PkGenerator sim2_pk{10, 1, 9, 1.5, 4};
  auto sim2 = [&](int sc, const std::vector<double>& tox, std::vector<double> eff,
                  std::vector<double> u) {
    Scenario s;
    s.label = "sim2_sc" + std::to_string(sc);
    s.grid = standard_grid();
    s.true_tox = tox;
    s.true_eff = std::move(eff);
    s.pk = sim2_pk;
    s.control_tox = 0.17;
    s.control_eff = 0.2;
    out.push_back({s, std::move(u), 0.452, 2});
  };
  sim2(1, tox_a, {0.2, 0.2, 0.2, 0.2, 0.2}, {0.508, 0.496, 0.452, 0.4, 0.32});
  sim2(2, tox_a, {0.2, 0.3, 0.5, 0.7, 0.8}, {0.508, 0.556, 0.632, 0.7, 0.68});
  sim2(3, tox_a, {0.8, 0.7, 0.5, 0.3, 0.2}, {0.868, 0.796, 0.632, 0.46, 0.32});
  sim2(4, tox_a, {0.2, 0.4, 0.8, 0.4, 0.2}, {0.508, 0.616, 0.812, 0.52, 0.32});
  sim2(5, tox_a, {0.8, 0.4, 0.2, 0.4, 0.8}, {0.868, 0.616, 0.452, 0.52, 0.68});
  sim2(6, tox_a, {0.2, 0.4, 0.5, 0.5, 0.5}, {0.508, 0.616, 0.632, 0.58, 0.5});
  sim2(7, tox_b, {0.2, 0.2, 0.2, 0.2, 0.2}, {0.508, 0.496, 0.484, 0.472, 0.46});
  sim2(8, tox_b, {0.2, 0.3, 0.5, 0.7, 0.8}, {0.508, 0.556, 0.664, 0.772, 0.82});
  sim2(9, tox_b, {0.8, 0.7, 0.5, 0.3, 0.2}, {0.868, 0.796, 0.664, 0.532, 0.46});
  sim2(10, tox_b, {0.2, 0.4, 0.8, 0.4, 0.2}, {0.508, 0.616, 0.844, 0.592, 0.46});
  sim2(11, tox_b, {0.8, 0.4, 0.2, 0.4, 0.8}, {0.868, 0.616, 0.484, 0.592, 0.82});
  sim2(12, tox_b, {0.2, 0.4, 0.5, 0.5, 0.5}, {0.508, 0.616, 0.664, 0.652, 0.64});
  return out;
}

inline PublishedScenario find_published(const std::string& label) {
  for (auto& p : published_scenarios()) {
    if (p.scenario.label == label) return p;
  }
  throw std::invalid_argument("unknown scenario '" + label + "'");
}

// Phase I only, p_T = pi_T = 0.3.
inline TrialDesign phase1_only_design() {
  TrialDesign d;
  d.phase1.target_tox = 0.3;
  d.phase1.grad_tox_threshold = 0.3;
  d.phase1.grad_eff_threshold = 0.2;
  d.run_phase2 = false;
  return d;
}

// Seamless phase I/II with a control arm, p_T = pi_T = 0.2.
inline TrialDesign seamless_design() {
  TrialDesign d;
  d.phase1.target_tox = 0.2;
  d.phase1.grad_tox_threshold = 0.2;
  d.phase1.grad_eff_threshold = 0.2;
  d.run_phase2 = true;
  d.include_control = true;
  return d;
}

inline TrialDesign design_for(const PublishedScenario& p) {
  return p.simulation == 1 ? phase1_only_design() : seamless_design();
}

// Shorter chains for desk-scale replication.
inline McmcSettings desk_mcmc() { return McmcSettings{2000, 1000, 2, 0.3}; }

}  // namespace pedoop
