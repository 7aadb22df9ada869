#pragma once

// CSV and JSON writers for simulation output.

#include "pedoop/phase2.hpp"
#include "pedoop/posterior.hpp"
#include "pedoop/simulation.hpp"

#include <json.hpp>

#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>

namespace pedoop {

inline std::string format_number(double x, int precision) {
  std::ostringstream os;
  os << std::setprecision(precision) << x;
  return os.str();
}

inline constexpr const char* kOcCsvHeader =
    "dose_index,dose_amount,true_tox,true_eff,utility,avg_n,sel_pct,sel_pct_with_u";

// One row per dose plus a control row when the design has a control arm.
// The control row leaves the selection columns empty.
inline void write_oc_csv(std::ostream& os, const Scenario& s, const OperatingCharacteristics& oc,
                         const TrialDesign& design, int precision = 6) {
  auto f = [precision](double x) { return format_number(x, precision); };
  const auto& w = design.phase2.weights;
  os << kOcCsvHeader << "\n";
  for (std::size_t d = 0; d < s.grid.size(); ++d) {
    const double u = expected_utility(independent_cells(s.true_tox[d], s.true_eff[d]), w);
    os << d + 1 << "," << f(s.grid.amount(d)) << "," << f(s.true_tox[d]) << "," << f(s.true_eff[d])
       << "," << f(u) << "," << f(oc.avg_patients_total[d]) << "," << f(oc.sel_pct[d]) << ","
       << f(oc.sel_pct_with_u[d]) << "\n";
  }
  if (design.run_phase2 && design.include_control) {
    const double u = expected_utility(independent_cells(s.control_tox, s.control_eff), w);
    os << "control,," << f(s.control_tox) << "," << f(s.control_eff) << "," << f(u) << ","
       << f(oc.avg_control_patients) << ",,\n";
  }
}

inline nlohmann::json oc_to_json(const OperatingCharacteristics& oc) {
  return {{"avg_patients_phase1", oc.avg_patients_phase1},
          {"avg_patients_total", oc.avg_patients_total},
          {"sel_pct", oc.sel_pct},
          {"sel_pct_with_u", oc.sel_pct_with_u},
          {"avg_control_patients", oc.avg_control_patients},
          {"pct_no_recommendation", oc.pct_no_recommendation},
          {"pct_terminated", oc.pct_terminated},
          {"avg_total_n", oc.avg_total_n},
          {"n_reps", oc.n_reps},
          {"n_failed", oc.n_failed},
          {"failures", oc.failures}};
}

inline nlohmann::json trial_summary_json(int rep, const TrialOutcome& t) {
  nlohmann::json j;
  j["rep"] = rep;
  std::vector<int> cohorts;
  for (auto d : t.phase1.cohort_doses) cohorts.push_back(static_cast<int>(d) + 1);
  j["phase1_cohort_doses"] = cohorts;
  std::vector<int> grads;
  for (auto d : t.phase1.graduates) grads.push_back(static_cast<int>(d) + 1);
  j["graduates"] = grads;
  j["terminated"] = t.phase1.terminated;
  j["stop_reason"] = t.phase1.stop_reason;
  j["patients_total"] = t.patients_total;
  j["control_patients"] = t.control_patients;
  if (t.phase2) {
    j["xi_updates"] = t.phase2->xi_history.size();
    j["allocations"] = t.phase2->allocations;
  }
  j["recommended_dose"] =
      t.selected_with_u ? nlohmann::json(static_cast<int>(*t.selected_with_u) + 1) : nlohmann::json();
  return j;
}

// Posterior draws, one row per retained draw. Latent columns are v_<i>, k_<i>.
inline void write_draws_csv(std::ostream& os, const PosteriorDraws& draws, bool with_latents = false) {
  os << std::setprecision(17);
  os << "draw,alpha_v,lambda_v,alpha_k,lambda_k,sigma,beta0,beta1,e_max,ed50,gamma";
  const std::size_t n_pat = draws.latents.empty() ? 0 : draws.latents.front().size();
  if (with_latents) {
    for (std::size_t i = 0; i < n_pat; ++i) os << ",v_" << i + 1 << ",k_" << i + 1;
  }
  os << "\n";
  for (std::size_t s = 0; s < draws.theta.size(); ++s) {
    const auto& t = draws.theta[s];
    os << s << "," << t.pk.alpha_v << "," << t.pk.lambda_v << "," << t.pk.alpha_k << ","
       << t.pk.lambda_k << "," << t.sigma << "," << t.tox.beta0 << "," << t.tox.beta1 << ","
       << t.pd.e_max << "," << t.pd.ed50 << "," << t.pd.gamma;
    if (with_latents) {
      for (const auto& l : draws.latents[s]) os << "," << l.v << "," << l.k;
    }
    os << "\n";
  }
}

}  // namespace pedoop
