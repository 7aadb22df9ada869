#pragma once

// Randomized phase II: utility scoring of joint (efficacy, toxicity) outcomes,
// Beta posteriors for the expected utility, Bayesian adaptive randomization
// and final arm selection.

#include "pedoop/random.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace pedoop {

// Outcome cells, in this order everywhere.
enum Cell : std::size_t { kEffNoTox = 0, kEffTox = 1, kNoEffNoTox = 2, kNoEffTox = 3 };

inline constexpr Cell outcome_cell(int tox, int eff) {
  if (eff) return tox ? kEffTox : kEffNoTox;
  return tox ? kNoEffTox : kNoEffNoTox;
}

struct UtilityWeights {
  double s1 = 1.0;  // efficacy, no toxicity
  double s2 = 0.6;  // efficacy, toxicity
  double s3 = 0.4;  // no efficacy, no toxicity
  double s4 = 0.0;  // no efficacy, toxicity

  std::array<double, 4> as_array() const { return {s1, s2, s3, s4}; }

  void validate() const {
    auto unit = [](double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; };
    if (s1 != 1.0 || s4 != 0.0 || !unit(s2) || !unit(s3)) {
      throw std::invalid_argument("UtilityWeights: need s1 = 1, s4 = 0 and s2, s3 in [0, 1]");
    }
  }
  bool operator==(const UtilityWeights&) const = default;
};

using CellProbs = std::array<double, 4>;

// Cell probabilities when toxicity and efficacy are independent.
inline CellProbs independent_cells(double tox, double eff) {
  return {eff * (1.0 - tox), eff * tox, (1.0 - eff) * (1.0 - tox), (1.0 - eff) * tox};
}

inline double expected_utility(const CellProbs& p, const UtilityWeights& w) {
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw std::domain_error("expected_utility: negative cell probability");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::domain_error("expected_utility: cell probabilities must sum to 1");
  }
  const auto s = w.as_array();
  double u = 0.0;
  for (std::size_t i = 0; i < 4; ++i) u += s[i] * p[i];
  return u;
}

struct ArmState {
  int arm_id = 0;  // 0 is the control arm
  std::array<int, 4> y{0, 0, 0, 0};

  int n() const { return y[0] + y[1] + y[2] + y[3]; }
  int tox_count() const { return y[kEffTox] + y[kNoEffTox]; }
  int eff_count() const { return y[kEffNoTox] + y[kEffTox]; }
  void add(int tox, int eff) { ++y[outcome_cell(tox, eff)]; }

  bool operator==(const ArmState&) const = default;
};

struct QuasiScore {
  double s = 0.0;
  int n = 0;
};

// S = sum_i s_i y_i, the fractional event count of the quasi-binomial model.
inline QuasiScore quasi_score(const ArmState& arm, const UtilityWeights& w) {
  const auto s = w.as_array();
  double total = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    if (arm.y[i] < 0) throw std::domain_error("quasi_score: negative outcome count");
    total += s[i] * arm.y[i];
  }
  return {total, arm.n()};
}

struct BetaParams {
  double a = 1.0;
  double b = 1.0;
  double mean() const { return a / (a + b); }
  bool operator==(const BetaParams&) const = default;
};

struct Phase2Config {
  int cohort_size = 10;
  int max_n = 150;
  double prior_alpha = 1.0;
  double prior_beta = 1.0;
  double tox_threshold = 0.2;  // pi_T
  double eff_threshold = 0.2;  // pi_E
  double sel_tox_prob = 0.7;   // p**
  double sel_eff_prob = 0.9;   // q**
  bool include_phase1_data = false;
  UtilityWeights weights;
  int bar_draws = 100000;

  void validate() const {
    auto prob = [](double x) { return x > 0.0 && x < 1.0; };
    if (cohort_size < 1 || max_n < cohort_size) {
      throw std::invalid_argument("Phase2Config: need cohort_size >= 1 and max_n >= cohort_size");
    }
    if (!(prior_alpha > 0.0 && prior_beta > 0.0)) {
      throw std::invalid_argument("Phase2Config: Beta prior parameters must be > 0");
    }
    if (!prob(tox_threshold) || !prob(eff_threshold) || !prob(sel_tox_prob) ||
        !prob(sel_eff_prob)) {
      throw std::invalid_argument("Phase2Config: thresholds must lie in (0, 1)");
    }
    if (bar_draws < 1) throw std::invalid_argument("Phase2Config: bar_draws must be >= 1");
    weights.validate();
  }
  bool operator==(const Phase2Config&) const = default;
};

// Beta(alpha + S, beta + n - S), optionally pooling phase I outcomes of the
// same dose.
inline BetaParams utility_posterior(const ArmState& arm, const Phase2Config& cfg,
                                    const std::optional<ArmState>& phase1_arm = std::nullopt) {
  auto [s, n] = quasi_score(arm, cfg.weights);
  if (phase1_arm) {
    const auto extra = quasi_score(*phase1_arm, cfg.weights);
    s += extra.s;
    n += extra.n;
  }
  return {cfg.prior_alpha + s, cfg.prior_beta + n - s};
}

// Monte Carlo estimate of xi_r = Pr(u_r > max_{r' != r} u_r'). Exact ties
// within a round are split uniformly at random.
inline std::vector<double> bar_probabilities(std::span<const BetaParams> arms, std::size_t draws,
                                             std::uint64_t seed) {
  if (arms.size() < 2) throw std::invalid_argument("bar_probabilities: need at least two arms");
  if (draws == 0) throw std::invalid_argument("bar_probabilities: need at least one draw");
  Rng rng = make_rng(seed);
  std::vector<std::gamma_distribution<double>> ga, gb;
  for (const auto& p : arms) {
    ga.emplace_back(p.a, 1.0);
    gb.emplace_back(p.b, 1.0);
  }
  std::vector<std::size_t> wins(arms.size(), 0);
  std::vector<std::size_t> tied;
  tied.reserve(arms.size());
  for (std::size_t s = 0; s < draws; ++s) {
    double best = -1.0;
    tied.clear();
    for (std::size_t r = 0; r < arms.size(); ++r) {
      const double x = ga[r](rng);
      const double y = gb[r](rng);
      const double u = x / (x + y);
      if (u > best) {
        best = u;
        tied.assign(1, r);
      } else if (u == best) {
        tied.push_back(r);
      }
    }
    const std::size_t winner =
        tied.size() == 1 ? tied[0]
                         : tied[std::uniform_int_distribution<std::size_t>(0, tied.size() - 1)(rng)];
    ++wins[winner];
  }
  std::vector<double> xi(arms.size());
  for (std::size_t r = 0; r < arms.size(); ++r) {
    xi[r] = static_cast<double>(wins[r]) / static_cast<double>(draws);
  }
  return xi;
}

// Equal split of n patients over `arms` arms; remainders go to the lowest ids.
inline std::vector<int> equal_allocation(int n, std::size_t arms) {
  if (arms == 0) throw std::invalid_argument("equal_allocation: no arms");
  std::vector<int> counts(arms, n / static_cast<int>(arms));
  for (int i = 0; i < n % static_cast<int>(arms); ++i) ++counts[i];
  return counts;
}

// Independent categorical draws with probabilities xi; returns per-arm counts.
inline std::vector<int> randomize_cohort(std::span<const double> xi, int cohort_size,
                                         std::uint64_t seed) {
  double total = 0.0;
  for (double p : xi) {
    if (!(p >= 0.0)) throw std::domain_error("randomize_cohort: negative probability");
    total += p;
  }
  if (xi.empty() || std::abs(total - 1.0) > 1e-9) {
    throw std::domain_error("randomize_cohort: probabilities must sum to 1");
  }
  std::vector<int> counts(xi.size(), 0);
  Rng rng = make_rng(seed);
  for (int i = 0; i < cohort_size; ++i) {
    const double u = uniform01(rng) * total;
    double acc = 0.0;
    std::size_t arm = xi.size() - 1;
    for (std::size_t r = 0; r < xi.size(); ++r) {
      acc += xi[r];
      if (u < acc && xi[r] > 0.0) {
        arm = r;
        break;
      }
    }
    // guard against rounding at the top of the cumulative sum
    while (xi[arm] == 0.0 && arm > 0) --arm;
    ++counts[arm];
  }
  return counts;
}

// Pr(p < pi_T) and Pr(q > pi_E) under independent Beta(1, 1) priors.
struct ArmTailProbs {
  double tox_below = 0.0;
  double eff_above = 0.0;
};

inline ArmTailProbs arm_tail_probs(const ArmState& arm, const Phase2Config& cfg) {
  const int n = arm.n();
  const int t = arm.tox_count();
  const int e = arm.eff_count();
  return {boost::math::ibeta(1.0 + t, 1.0 + n - t, cfg.tox_threshold),
          boost::math::ibetac(1.0 + e, 1.0 + n - e, cfg.eff_threshold)};
}

// Treatment arms (arm_id >= 1) meeting both selection criteria.
inline std::vector<int> candidate_set(std::span<const ArmState> arms, const Phase2Config& cfg) {
  std::vector<int> c;
  for (const auto& arm : arms) {
    if (arm.arm_id < 1) continue;
    const auto tp = arm_tail_probs(arm, cfg);
    if (tp.tox_below > cfg.sel_tox_prob && tp.eff_above > cfg.sel_eff_prob) c.push_back(arm.arm_id);
  }
  return c;
}

struct ArmSelection {
  std::vector<int> candidates;      // arm ids in C
  std::vector<double> xi;           // aligned with the input arms
  std::optional<int> recommended;   // arm id, empty for no recommendation
};

// Final selection given precomputed xi (aligned with arms).
inline ArmSelection select_arm_from_xi(std::span<const ArmState> arms, std::vector<double> xi,
                                       const Phase2Config& cfg) {
  ArmSelection sel;
  sel.candidates = candidate_set(arms, cfg);
  sel.xi = std::move(xi);
  if (sel.candidates.empty()) return sel;
  std::optional<std::size_t> best;
  std::optional<std::size_t> control;
  for (std::size_t r = 0; r < arms.size(); ++r) {
    if (arms[r].arm_id == 0) control = r;
    const bool in_c = std::find(sel.candidates.begin(), sel.candidates.end(), arms[r].arm_id) !=
                      sel.candidates.end();
    if (in_c && (!best || sel.xi[r] > sel.xi[*best])) best = r;
  }
  if (control && sel.xi[*control] >= sel.xi[*best]) return sel;
  sel.recommended = arms[*best].arm_id;
  return sel;
}

inline ArmSelection select_arm(std::span<const ArmState> arms, const Phase2Config& cfg,
                               std::uint64_t seed,
                               std::span<const std::optional<ArmState>> phase1_arms = {}) {
  std::vector<BetaParams> post;
  for (std::size_t r = 0; r < arms.size(); ++r) {
    const bool pool = cfg.include_phase1_data && r < phase1_arms.size();
    post.push_back(utility_posterior(arms[r], cfg, pool ? phase1_arms[r] : std::nullopt));
  }
  std::vector<double> xi;
  if (post.size() >= 2) {
    xi = bar_probabilities(post, static_cast<std::size_t>(cfg.bar_draws), seed);
  } else {
    xi.assign(post.size(), 1.0);
  }
  return select_arm_from_xi(arms, std::move(xi), cfg);
}

}  // namespace pedoop
