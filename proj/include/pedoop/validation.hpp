#pragma once

// Numerical self-checks run by `pedoop validate`. Each check compares the
// library against an independently computed value.

#include "pedoop/phase2.hpp"
#include "pedoop/pkpd.hpp"
#include "pedoop/quadrature.hpp"
#include "pedoop/random.hpp"
#include "pedoop/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace pedoop {

struct CheckResult {
  std::string name;
  bool pass = false;
  double observed = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

using EffectFn = std::function<double(double, const PkPopulation&, const PdParams&)>;

// Replaceable pieces, so the suite itself can be shown to catch a broken
// implementation.
struct ValidationHooks {
  EffectFn closed_form_effect = cumulative_effect_closed_form;
};

inline std::string format_double(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

namespace detail {

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

struct RandomCase {
  double dose;
  PkPopulation pk;
  PdParams pd;
};

inline std::vector<RandomCase> random_cases(std::uint64_t seed, int n) {
  Rng rng = make_rng(seed);
  auto unif = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  std::vector<RandomCase> out;
  for (int i = 0; i < n; ++i) {
    RandomCase c;
    c.dose = unif(1.0, 150.0);
    c.pk = {unif(1.5, 12.0), unif(0.2, 3.0), unif(1.5, 12.0), unif(0.2, 3.0)};
    c.pd = {unif(0.1, 3.0), unif(0.5, 50.0), 2.0 / c.pk.alpha_k};
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

inline CheckResult check_auc_table() {
  const PkPopulation pk{10, 1, 9, 1.5};
  const std::vector<double> doses{15, 30, 60, 90, 120};
  const std::vector<double> expected{0.3125, 0.625, 1.25, 1.875, 2.5};
  CheckResult r{"auc_population table", true, 0, 0, 1e-12, {}};
  for (std::size_t i = 0; i < doses.size(); ++i) {
    const double v = auc_population(doses[i], pk);
    if (std::abs(v - expected[i]) > r.tolerance && r.pass) {
      r.pass = false;
      r.observed = v;
      r.expected = expected[i];
      r.detail = "dose " + format_double(doses[i]);
    }
  }
  if (r.pass) {
    r.observed = auc_population(120, pk);
    r.expected = 2.5;
  }
  return r;
}

inline CheckResult check_auc_quadrature(std::uint64_t seed = 11) {
  CheckResult r{"auc_population vs quadrature", true, 0, 0, 1e-8, {}};
  double worst = 0.0;
  for (const auto& c : detail::random_cases(seed, 20)) {
    const auto q =
        integrate_half_line([&](double t) { return concentration_population(c.dose, c.pk, t); }, 0.0);
    worst = std::max(worst, detail::rel_err(auc_population(c.dose, c.pk), q.value));
  }
  r.observed = worst;
  r.pass = worst < r.tolerance;
  r.detail = "max relative error over 20 random parameter sets";
  return r;
}

inline CheckResult check_effect_closed_form(const ValidationHooks& hooks, std::uint64_t seed = 7) {
  CheckResult r{"cumulative_effect closed form vs quadrature", true, 0, 0, 1e-8, {}};
  double worst = 0.0;
  for (const auto& c : detail::random_cases(seed, 20)) {
    const double exact = hooks.closed_form_effect(c.dose, c.pk, c.pd);
    const double quad = cumulative_effect_quadrature(c.dose, c.pk, c.pd);
    worst = std::max(worst, detail::rel_err(exact, quad));
  }
  // fixed points with known values
  const PkPopulation pk{2, 1, 2, 1};
  const PdParams pd{1, 1, 1};
  worst = std::max(worst, detail::rel_err(hooks.closed_form_effect(1.0, pk, pd), std::numbers::pi / 4));
  worst = std::max(worst, detail::rel_err(hooks.closed_form_effect(4.0, pk, pd),
                                          2.0 * (std::numbers::pi / 2 - std::atan(0.5))));
  r.observed = worst;
  r.pass = worst < r.tolerance;
  r.detail = "max relative error over 20 random sets with gamma * alpha_k = 2 and two fixed points";
  return r;
}

inline CheckResult check_efficacy_link() {
  CheckResult r{"efficacy link", true, 0, 0, 1e-12, {}};
  r.observed = efficacy_link(std::log(2.0));
  r.expected = 0.5;
  const double q = efficacy_link(std::numbers::pi / 4);
  r.pass = std::abs(r.observed - r.expected) < r.tolerance &&
           std::abs(q - 0.5440618722340038) < r.tolerance && efficacy_link(0.0) == 0.0 &&
           std::abs(efficacy_link(1e6) - 1.0) < 1e-6;
  return r;
}

inline CheckResult check_population_concentration(std::uint64_t seed = 3) {
  const PkPopulation pk{10, 1, 9, 1.5};
  const double dose = 60, t = 1.5;
  CheckResult r{"population concentration vs Monte Carlo", true, 0, 0, 0.01, {}};
  r.expected = concentration_population(dose, pk, t);
  Rng rng = make_rng(seed);
  const int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = gamma_rate(rng, pk.alpha_v, pk.lambda_v);
    const double k = gamma_rate(rng, pk.alpha_k, pk.lambda_k);
    sum += concentration_patient(dose, {v, k}, t);
  }
  r.observed = sum / n;
  r.pass = detail::rel_err(r.observed, r.expected) < r.tolerance;
  r.detail = "relative tolerance, 10^6 draws";
  return r;
}

inline CheckResult check_utility_tables() {
  CheckResult r{"published utility tables", true, 0, 0, 0.005, {}};
  const UtilityWeights w;
  double worst[3] = {0.0, 0.0, 0.0};
  for (const auto& p : published_scenarios()) {
    // the phase I table prints two decimals
    const double tol = p.simulation == 1 ? 0.01 : 0.005;
    auto visit = [&](double tox, double eff, double printed, const std::string& where) {
      const double u = expected_utility(independent_cells(tox, eff), w);
      const double e = std::abs(u - printed);
      worst[p.simulation] = std::max(worst[p.simulation], e);
      if (e > tol && r.pass) {
        r.pass = false;
        r.observed = u;
        r.expected = printed;
        r.tolerance = tol;
        r.detail = where;
      }
    };
    const auto& s = p.scenario;
    for (std::size_t d = 0; d < s.grid.size(); ++d) {
      visit(s.true_tox[d], s.true_eff[d], p.printed_utility[d],
            s.label + " dose " + std::to_string(d + 1));
    }
    if (p.printed_control_utility) {
      visit(s.control_tox, s.control_eff, *p.printed_control_utility, s.label + " control");
    }
  }
  if (r.pass) {
    r.observed = worst[2];
    r.expected = 0.0;
    r.detail = "max deviation " + format_double(worst[2]) + " over 12 three-decimal scenarios, " +
               format_double(worst[1]) + " (tolerance 0.01) over 4 two-decimal scenarios";
  }
  return r;
}

inline CheckResult check_beta_update() {
  CheckResult r{"quasi-binomial Beta update", true, 0, 0, 1e-12, {}};
  const ArmState arm{1, {3, 1, 4, 2}};
  const auto b = utility_posterior(arm, Phase2Config{});
  r.observed = b.a;
  r.expected = 6.2;
  r.pass = std::abs(b.a - 6.2) < r.tolerance && std::abs(b.b - 5.8) < r.tolerance;
  r.detail = "Beta(" + format_double(b.a) + ", " + format_double(b.b) + ")";
  return r;
}

inline CheckResult check_bar_exact(std::uint64_t seed = 5) {
  CheckResult r{"BAR two-arm exact case", true, 0, 5.0 / 6.0, 0.01, {}};
  const std::vector<BetaParams> arms{{2, 1}, {1, 2}};
  const auto xi = bar_probabilities(arms, 100000, seed);
  r.observed = xi[0];
  r.pass = std::abs(xi[0] - 5.0 / 6.0) < r.tolerance && std::abs(xi[1] - 1.0 / 6.0) < r.tolerance;
  return r;
}

inline CheckResult check_tail_probabilities() {
  CheckResult r{"Beta tail probabilities", true, 0, 0, 1e-9, {}};
  // 3 toxicities and 15 responses out of 30
  const ArmState arm{1, {13, 2, 14, 1}};
  Phase2Config cfg;
  const auto tp = arm_tail_probs(arm, cfg);
  r.observed = tp.tox_below;
  r.expected = 0.8929955578542698;
  r.pass = std::abs(tp.tox_below - r.expected) < r.tolerance &&
           std::abs(tp.eff_above - 0.9999118450479717) < r.tolerance;
  return r;
}

inline std::vector<CheckResult> run_validation(const ValidationHooks& hooks = {}) {
  return {check_auc_table(),           check_auc_quadrature(),
          check_effect_closed_form(hooks), check_efficacy_link(),
          check_population_concentration(), check_utility_tables(),
          check_beta_update(),         check_bar_exact(),
          check_tail_probabilities()};
}

inline bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
}

inline void print_report(std::ostream& os, const std::vector<CheckResult>& results) {
  for (const auto& r : results) {
    os << (r.pass ? "PASS " : "FAIL ") << r.name << ": observed " << format_double(r.observed)
       << ", expected " << format_double(r.expected) << ", tolerance " << format_double(r.tolerance);
    if (!r.detail.empty()) os << " (" << r.detail << ")";
    os << "\n";
  }
}

}  // namespace pedoop
