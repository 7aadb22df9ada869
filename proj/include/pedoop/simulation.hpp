#pragma once

// Single-trial simulation (phase I -> graduation -> phase II -> selection) and
// the replication harness that aggregates operating characteristics.

#include "pedoop/comparator.hpp"
#include "pedoop/curves.hpp"
#include "pedoop/phase1.hpp"
#include "pedoop/phase2.hpp"
#include "pedoop/posterior.hpp"
#include "pedoop/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace pedoop {

enum class DoseModel { Pedoop, LogitEmax };

inline const char* to_string(DoseModel m) {
  return m == DoseModel::Pedoop ? "pedoop" : "logit_emax";
}

struct TrialDesign {
  DoseModel model = DoseModel::Pedoop;
  Phase1Config phase1;
  Phase2Config phase2;
  bool run_phase2 = true;
  bool include_control = true;
  McmcSettings mcmc;
  PriorSpec prior;
  ComparatorPrior comparator_prior;

  void validate(std::size_t grid_size) const {
    phase1.validate(grid_size);
    phase2.validate();
    mcmc.validate();
    prior.validate();
  }
  bool operator==(const TrialDesign&) const = default;
};

// Posterior dose curves under the design's dose-response model.
inline DoseCurves fit_dose_curves(const Phase1Data& data, const TrialDesign& design,
                                  bool include_efficacy, std::uint64_t seed) {
  if (design.model == DoseModel::LogitEmax) {
    return dose_curves(sample_comparator_posterior(data, design.comparator_prior, design.mcmc,
                                                   include_efficacy, seed),
                       data.grid);
  }
  return dose_curves(sample_posterior(data, design.prior, design.mcmc, include_efficacy, seed),
                     data.grid);
}

// Seed streams inside one simulated trial.
namespace stream {
inline constexpr std::uint64_t kPatients = 1;
inline constexpr std::uint64_t kEscalationFit = 1000;  // + cohort number
inline constexpr std::uint64_t kGraduationFit = 2;
inline constexpr std::uint64_t kSelectWithUtility = 3;
inline constexpr std::uint64_t kPhase2 = 4;
}  // namespace stream

struct Phase1Result {
  Phase1Data data;
  std::vector<std::size_t> cohort_doses;
  std::vector<std::size_t> graduates;
  std::optional<std::size_t> selected_with_u;
  bool terminated = false;
  std::string stop_reason;
};

inline Phase1Result simulate_phase1(const Scenario& scenario, const TrialDesign& design,
                                    std::uint64_t seed) {
  const auto& cfg = design.phase1;
  Phase1Result res{Phase1Data(scenario.grid), {}, {}, std::nullopt, false, {}};
  Rng patients_rng = make_rng(derive_seed(seed, stream::kPatients));
  std::size_t current = cfg.start_dose;
  int enrolled = 0;
  for (std::uint64_t cohort = 0;; ++cohort) {
    const int size = std::min(cfg.cohort_size, cfg.max_n - enrolled);
    for (int i = 0; i < size; ++i) {
      res.data.patients.push_back(generate_patient(scenario, current, patients_rng));
    }
    res.cohort_doses.push_back(current);
    enrolled += size;
    if (enrolled >= cfg.max_n) {
      res.stop_reason = "maximum sample size reached";
      break;
    }
    const auto curves = fit_dose_curves(res.data, design, false,
                                        derive_seed(seed, stream::kEscalationFit + cohort));
    const auto dec = next_dose(EscalationState::from_data(res.data, current), curves.tox, cfg);
    if (dec.action == Action::Terminate) {
      res.terminated = true;
      res.stop_reason = "no dose satisfies the safety rule";
      return res;
    }
    current = dec.dose;
  }
  const auto curves = fit_dose_curves(res.data, design, true, derive_seed(seed, stream::kGraduationFit));
  res.graduates = graduate(curves, cfg);
  res.selected_with_u = select_with_utility(res.graduates, res.data, design.phase2.weights,
                                            derive_seed(seed, stream::kSelectWithUtility),
                                            design.phase2.bar_draws);
  return res;
}

struct Phase2Result {
  std::vector<ArmState> arms;           // control (id 0) first when present
  std::vector<std::size_t> arm_doses;   // grid index per treatment arm id - 1
  ArmSelection selection;
  std::vector<std::vector<double>> xi_history;
  std::vector<std::vector<int>> allocations;  // per cohort, per arm

  std::optional<std::size_t> recommended_dose() const {
    if (!selection.recommended) return std::nullopt;
    return arm_doses.at(static_cast<std::size_t>(*selection.recommended - 1));
  }
};

// Phase II among `graduates` (grid indices, ascending) plus an optional control.
inline Phase2Result simulate_phase2(const std::vector<std::size_t>& graduates,
                                    const Scenario& scenario, const Phase2Config& cfg,
                                    bool include_control,
                                    const std::vector<std::optional<ArmState>>& phase1_arms,
                                    std::uint64_t seed) {
  Phase2Result res;
  if (graduates.empty()) return res;
  std::vector<double> tox, eff;
  if (include_control) {
    res.arms.push_back(ArmState{0, {}});
    tox.push_back(scenario.control_tox);
    eff.push_back(scenario.control_eff);
  }
  for (std::size_t r = 0; r < graduates.size(); ++r) {
    res.arms.push_back(ArmState{static_cast<int>(r) + 1, {}});
    res.arm_doses.push_back(graduates[r]);
    tox.push_back(scenario.true_tox[graduates[r]]);
    eff.push_back(scenario.true_eff[graduates[r]]);
  }
  // phase I pooling data aligned with res.arms
  std::vector<std::optional<ArmState>> pooled(res.arms.size());
  for (std::size_t r = 0; r < res.arms.size(); ++r) {
    const int id = res.arms[r].arm_id;
    if (id >= 1 && graduates[id - 1] < phase1_arms.size()) pooled[r] = phase1_arms[graduates[id - 1]];
  }

  Rng outcomes = make_rng(derive_seed(seed, 0));
  auto treat = [&](const std::vector<int>& counts) {
    for (std::size_t r = 0; r < counts.size(); ++r) {
      for (int i = 0; i < counts[r]; ++i) {
        const int t = bernoulli(outcomes, tox[r]);
        const int e = bernoulli(outcomes, eff[r]);
        res.arms[r].add(t, e);
      }
    }
    res.allocations.push_back(counts);
  };

  int n = std::min(cfg.cohort_size, cfg.max_n);
  treat(equal_allocation(n, res.arms.size()));
  for (std::uint64_t cohort = 1; n < cfg.max_n; ++cohort) {
    const int size = std::min(cfg.cohort_size, cfg.max_n - n);
    std::vector<double> xi;
    if (res.arms.size() == 1) {
      xi = {1.0};
    } else {
      std::vector<BetaParams> post;
      for (std::size_t r = 0; r < res.arms.size(); ++r) {
        post.push_back(utility_posterior(res.arms[r], cfg,
                                         cfg.include_phase1_data ? pooled[r] : std::nullopt));
      }
      xi = bar_probabilities(post, static_cast<std::size_t>(cfg.bar_draws),
                             derive_seed(seed, 2 * cohort));
    }
    res.xi_history.push_back(xi);
    treat(randomize_cohort(xi, size, derive_seed(seed, 2 * cohort + 1)));
    n += size;
  }
  res.selection = select_arm(res.arms, cfg, derive_seed(seed, 1), pooled);
  return res;
}

struct TrialOutcome {
  Phase1Result phase1;
  std::optional<Phase2Result> phase2;
  std::vector<int> patients_phase1;  // per dose
  std::vector<int> patients_total;   // per dose, both phases
  int control_patients = 0;
  std::vector<bool> selected;        // graduation set or phase II candidate set
  std::optional<std::size_t> selected_with_u;

  int total_n() const {
    int t = control_patients;
    for (int v : patients_total) t += v;
    return t;
  }
};

inline TrialOutcome simulate_trial(const Scenario& scenario, const TrialDesign& design,
                                   std::uint64_t seed) {
  TrialOutcome out;
  out.phase1 = simulate_phase1(scenario, design, seed);
  const std::size_t n_doses = scenario.grid.size();
  out.patients_phase1 = out.phase1.data.counts().n;
  out.patients_total = out.patients_phase1;
  out.selected.assign(n_doses, false);

  if (!design.run_phase2) {
    for (std::size_t d : out.phase1.graduates) out.selected[d] = true;
    out.selected_with_u = out.phase1.selected_with_u;
    return out;
  }
  if (out.phase1.graduates.empty()) return out;

  std::vector<std::optional<ArmState>> p1_arms(n_doses);
  for (std::size_t d = 0; d < n_doses; ++d) p1_arms[d] = phase1_arm(out.phase1.data, d);
  out.phase2 = simulate_phase2(out.phase1.graduates, scenario, design.phase2, design.include_control,
                               p1_arms, derive_seed(seed, stream::kPhase2));
  const auto& p2 = *out.phase2;
  for (const auto& arm : p2.arms) {
    if (arm.arm_id == 0) {
      out.control_patients += arm.n();
    } else {
      out.patients_total[p2.arm_doses[arm.arm_id - 1]] += arm.n();
    }
  }
  for (int id : p2.selection.candidates) out.selected[p2.arm_doses[id - 1]] = true;
  out.selected_with_u = p2.recommended_dose();
  return out;
}

struct OperatingCharacteristics {
  std::vector<double> avg_patients_phase1;
  std::vector<double> avg_patients_total;
  std::vector<double> sel_pct;
  std::vector<double> sel_pct_with_u;
  double avg_control_patients = 0.0;
  double pct_no_recommendation = 0.0;
  double pct_terminated = 0.0;
  double avg_total_n = 0.0;
  int n_reps = 0;
  int n_failed = 0;
  std::vector<std::string> failures;

  bool operator==(const OperatingCharacteristics&) const = default;
};

inline std::uint64_t replicate_seed(std::uint64_t master_seed, int rep) {
  return derive_seed(master_seed, static_cast<std::uint64_t>(rep));
}

using TrialObserver = std::function<void(int rep, const TrialOutcome&)>;

// Replicates that throw are recorded and excluded from the averages; more than
// 1% failures aborts the run. `observer` sees successful trials in replicate order.
inline OperatingCharacteristics run_replications(const Scenario& scenario, const TrialDesign& design,
                                                 int n_reps, int parallelism,
                                                 std::uint64_t master_seed,
                                                 const TrialObserver& observer = {}) {
  if (n_reps < 1) throw std::invalid_argument("run_replications: n_reps must be >= 1");
  scenario.validate();
  design.validate(scenario.grid.size());
  const auto workers =
      static_cast<std::size_t>(std::clamp(parallelism, 1, std::max(1, n_reps)));

  std::vector<std::optional<TrialOutcome>> results(static_cast<std::size_t>(n_reps));
  std::vector<std::string> errors(static_cast<std::size_t>(n_reps));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int rep = next++; rep < n_reps; rep = next++) {
      try {
        results[rep] = simulate_trial(scenario, design, replicate_seed(master_seed, rep));
      } catch (const std::exception& e) {
        errors[rep] = "replicate " + std::to_string(rep) + ": " + e.what();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  const std::size_t n_doses = scenario.grid.size();
  OperatingCharacteristics oc;
  oc.n_reps = n_reps;
  oc.avg_patients_phase1.assign(n_doses, 0.0);
  oc.avg_patients_total.assign(n_doses, 0.0);
  oc.sel_pct.assign(n_doses, 0.0);
  oc.sel_pct_with_u.assign(n_doses, 0.0);
  int ok = 0;
  for (int rep = 0; rep < n_reps; ++rep) {
    if (!results[rep]) {
      ++oc.n_failed;
      oc.failures.push_back(errors[rep]);
      continue;
    }
    const auto& t = *results[rep];
    ++ok;
    if (observer) observer(rep, t);
    for (std::size_t d = 0; d < n_doses; ++d) {
      oc.avg_patients_phase1[d] += t.patients_phase1[d];
      oc.avg_patients_total[d] += t.patients_total[d];
      oc.sel_pct[d] += t.selected[d] ? 1.0 : 0.0;
      if (t.selected_with_u == d) oc.sel_pct_with_u[d] += 1.0;
    }
    oc.avg_control_patients += t.control_patients;
    oc.avg_total_n += t.total_n();
    if (!t.selected_with_u) oc.pct_no_recommendation += 1.0;
    if (t.phase1.terminated) oc.pct_terminated += 1.0;
  }
  if (oc.n_failed * 100 > n_reps) {
    throw std::runtime_error("run_replications: " + std::to_string(oc.n_failed) + " of " +
                             std::to_string(n_reps) + " replicates failed; first: " +
                             oc.failures.front());
  }
  const double denom = ok;
  for (std::size_t d = 0; d < n_doses; ++d) {
    oc.avg_patients_phase1[d] /= denom;
    oc.avg_patients_total[d] /= denom;
    oc.sel_pct[d] /= denom;
    oc.sel_pct_with_u[d] /= denom;
  }
  oc.avg_control_patients /= denom;
  oc.avg_total_n /= denom;
  oc.pct_no_recommendation /= denom;
  oc.pct_terminated /= denom;
  return oc;
}

}  // namespace pedoop
