#pragma once

// Phase I decision rules: CRM-style next-dose selection with acceleration and
// no-skip constraints, the overdose safety rule, graduation to phase II and the
// single-dose pick among graduates.

#include "pedoop/curves.hpp"
#include "pedoop/data.hpp"
#include "pedoop/phase2.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pedoop {

struct Phase1Config {
  double target_tox = 0.3;                    // p_T
  std::optional<double> safety_threshold;     // pi_S, defaults to p_T
  double safety_cutoff = 0.95;                // s*
  double grad_tox_threshold = 0.3;            // pi_T
  double grad_eff_threshold = 0.2;            // pi_E
  double grad_tox_prob = 0.6;                 // p*
  double grad_eff_prob = 0.6;                 // q*
  int cohort_size = 3;
  int max_n = 30;
  std::size_t start_dose = 0;

  double pi_s() const { return safety_threshold.value_or(target_tox); }

  void validate(std::size_t grid_size) const {
    auto prob = [](double x) { return x > 0.0 && x < 1.0; };
    if (!prob(target_tox) || !prob(pi_s()) || !prob(safety_cutoff) || !prob(grad_tox_threshold) ||
        !prob(grad_eff_threshold) || !prob(grad_tox_prob) || !prob(grad_eff_prob)) {
      throw std::invalid_argument("Phase1Config: probabilities must lie in (0, 1)");
    }
    if (cohort_size < 1 || max_n < cohort_size) {
      throw std::invalid_argument("Phase1Config: need cohort_size >= 1 and max_n >= cohort_size");
    }
    if (start_dose >= grid_size) throw std::invalid_argument("Phase1Config: start dose outside grid");
  }
  bool operator==(const Phase1Config&) const = default;
};

struct EscalationState {
  std::size_t current_dose = 0;
  std::vector<int> n;  // enrolled per dose
  std::vector<int> y;  // DLTs per dose
  bool terminated = false;
  std::string reason;

  static EscalationState from_data(const Phase1Data& data, std::size_t current) {
    const auto c = data.counts();
    return {current, c.n, c.y, false, {}};
  }

  int total_n() const {
    int t = 0;
    for (int v : n) t += v;
    return t;
  }
  std::optional<std::size_t> max_tried() const {
    for (std::size_t d = n.size(); d-- > 0;) {
      if (n[d] > 0) return d;
    }
    return std::nullopt;
  }
};

enum class Action { Escalate, Stay, DeEscalate, Terminate };

inline const char* to_string(Action a) {
  switch (a) {
    case Action::Escalate: return "escalate";
    case Action::Stay: return "stay";
    case Action::DeEscalate: return "de-escalate";
    case Action::Terminate: return "terminate";
  }
  return "?";
}

struct DoseDecision {
  Action action = Action::Stay;
  std::size_t dose = 0;                 // meaningless for Terminate
  std::vector<double> tox_mean;         // posterior mean p_d
  std::vector<double> overdose_prob;    // Pr(p_d > pi_S)
  std::vector<bool> safe;
};

inline bool is_safe(std::size_t dose, const CurveMatrix& tox, const Phase1Config& cfg) {
  return tail_prob(tox, dose, cfg.pi_s(), Tail::Above) < cfg.safety_cutoff;
}

inline DoseDecision next_dose(const EscalationState& state, const CurveMatrix& tox,
                              const Phase1Config& cfg) {
  if (tox.draws() == 0) throw std::domain_error("next_dose: no posterior draws");
  const std::size_t n_doses = tox.doses();
  if (state.current_dose >= n_doses || state.n.size() != n_doses || state.y.size() != n_doses) {
    throw std::invalid_argument("next_dose: escalation state does not match the dose grid");
  }
  DoseDecision dec;
  dec.tox_mean = tox.means();
  for (std::size_t d = 0; d < n_doses; ++d) {
    dec.overdose_prob.push_back(tail_prob(tox, d, cfg.pi_s(), Tail::Above));
    dec.safe.push_back(dec.overdose_prob.back() < cfg.safety_cutoff);
  }

  auto finish = [&](std::size_t next) {
    dec.dose = next;
    dec.action = next > state.current_dose   ? Action::Escalate
                 : next < state.current_dose ? Action::DeEscalate
                                             : Action::Stay;
    return dec;
  };
  // Largest safe dose not above `d`.
  auto safe_at_or_below = [&](std::size_t d) -> std::optional<std::size_t> {
    for (std::size_t i = d + 1; i-- > 0;) {
      if (dec.safe[i]) return i;
    }
    return std::nullopt;
  };

  if (std::none_of(dec.safe.begin(), dec.safe.end(), [](bool s) { return s; })) {
    dec.action = Action::Terminate;
    return dec;
  }

  int dlts_so_far = 0;
  for (std::size_t d = 0; d <= state.current_dose; ++d) dlts_so_far += state.y[d];
  if (dlts_so_far == 0) {
    const std::size_t up = std::min(state.current_dose + 1, n_doses - 1);
    if (auto s = safe_at_or_below(up)) return finish(*s);
  }

  std::optional<std::size_t> best;
  for (std::size_t d = 0; d < n_doses; ++d) {
    if (!dec.safe[d]) continue;
    // strict < keeps the lower dose on ties
    if (!best || std::abs(dec.tox_mean[d] - cfg.target_tox) <
                     std::abs(dec.tox_mean[*best] - cfg.target_tox)) {
      best = d;
    }
  }
  std::size_t target = *best;
  // no skipping over an untried dose
  if (target > state.current_dose + 1 && state.n[target - 1] == 0) target = state.current_dose + 1;
  if (auto s = safe_at_or_below(target)) return finish(*s);
  dec.action = Action::Terminate;
  return dec;
}

// Safe doses with Pr(p_d < pi_T) > p* and Pr(q_d > pi_E) > q*.
inline std::vector<std::size_t> graduate(const DoseCurves& curves, const Phase1Config& cfg) {
  if (curves.tox.draws() == 0 || curves.eff.draws() == 0) {
    throw std::domain_error("graduate: no posterior draws");
  }
  std::vector<std::size_t> out;
  for (std::size_t d = 0; d < curves.tox.doses(); ++d) {
    if (!is_safe(d, curves.tox, cfg)) continue;
    const double low_tox = tail_prob(curves.tox, d, cfg.grad_tox_threshold, Tail::Below);
    const double high_eff = tail_prob(curves.eff, d, cfg.grad_eff_threshold, Tail::Above);
    if (low_tox > cfg.grad_tox_prob && high_eff > cfg.grad_eff_prob) out.push_back(d);
  }
  return out;
}

// Joint outcome counts of phase I patients at `dose`; pending responses are left out.
inline ArmState phase1_arm(const Phase1Data& data, std::size_t dose) {
  ArmState arm;
  arm.arm_id = static_cast<int>(dose) + 1;
  for (const auto& p : data.patients) {
    if (p.dose_index == dose && p.efficacy) arm.add(p.dlt, *p.efficacy);
  }
  return arm;
}

// Picks at most one graduated dose: the one most likely to have the highest
// expected utility given phase I outcomes. Differences in xi below the Monte
// Carlo resolution go to the lower dose.
inline std::optional<std::size_t> select_with_utility(const std::vector<std::size_t>& graduates,
                                                      const Phase1Data& data,
                                                      const UtilityWeights& weights,
                                                      std::uint64_t seed, int draws = 100000) {
  if (graduates.empty()) return std::nullopt;
  if (graduates.size() == 1) return graduates.front();
  Phase2Config cfg;
  cfg.weights = weights;
  std::vector<BetaParams> post;
  for (std::size_t d : graduates) post.push_back(utility_posterior(phase1_arm(data, d), cfg));
  const auto xi = bar_probabilities(post, static_cast<std::size_t>(draws), seed);
  const double resolution = 3.0 / std::sqrt(static_cast<double>(draws));
  const double top = *std::max_element(xi.begin(), xi.end());
  for (std::size_t i = 0; i < xi.size(); ++i) {
    if (top - xi[i] < resolution) return graduates[i];
  }
  return graduates.front();
}

}  // namespace pedoop
