#include "pedoop/scenarios.hpp"
#include "pedoop/simulation.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace pedoop;

namespace {

McmcSettings quick_mcmc() { return {500, 250, 2, 0.3}; }

Scenario flat_tox_scenario(double tox) {
  Scenario s = find_published("sim2_sc3").scenario;
  s.label = "flat";
  s.true_tox.assign(5, tox);
  return s;
}

TrialDesign quick_phase1_only() {
  TrialDesign d = phase1_only_design();
  d.mcmc = quick_mcmc();
  d.phase2.bar_draws = 10000;
  return d;
}

TrialDesign quick_seamless() {
  TrialDesign d = seamless_design();
  d.mcmc = quick_mcmc();
  d.phase2.bar_draws = 10000;
  return d;
}

}  // namespace

TEST(GeneratePatient, NoiselessConcentrations) {
  Scenario s = find_published("sim2_sc1").scenario;
  s.pk.sigma = 0.0;
  Rng rng = make_rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto g = generate_patient_detailed(s, 2, rng);
    ASSERT_EQ(g.record.times, s.sample_times);
    for (std::size_t j = 0; j < g.record.times.size(); ++j) {
      EXPECT_DOUBLE_EQ(g.record.log_concentrations[j],
                       std::log(60.0) - std::log(g.pk.v) - g.pk.k * g.record.times[j]);
    }
  }
}

TEST(GeneratePatient, MeanAucMatchesPopulation) {
  const Scenario s = find_published("sim2_sc1").scenario;
  Rng rng = make_rng(44);
  const int n = 100000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const auto g = generate_patient_detailed(s, 2, rng);
    const double auc = auc_patient(60.0, g.pk);
    sum += auc;
    sum2 += auc * auc;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, 1.25, 3 * se);
}

TEST(GeneratePatient, CertainToxicityAndDeterminism) {
  Scenario s = flat_tox_scenario(1.0);
  Rng rng = make_rng(1);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(generate_patient(s, i % 5, rng).dlt, 1);
  EXPECT_EQ(generate_patient(s, 3, 99), generate_patient(s, 3, 99));
}

TEST(Scenario, Validation) {
  Scenario s = find_published("sim2_sc1").scenario;
  EXPECT_NO_THROW(s.validate());
  s.true_tox.pop_back();
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = find_published("sim2_sc1").scenario;
  s.true_eff[0] = 1.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = find_published("sim2_sc1").scenario;
  s.sample_times = {1, 1};
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(PublishedScenarios, UtilitiesMatchPrintedTables) {
  const UtilityWeights w;
  const auto all = published_scenarios();
  ASSERT_EQ(all.size(), 16u);
  for (const auto& p : all) {
    const double tol = p.simulation == 1 ? 0.01 : 0.005;
    for (std::size_t d = 0; d < 5; ++d) {
      const double u = expected_utility(independent_cells(p.scenario.true_tox[d], p.scenario.true_eff[d]), w);
      EXPECT_NEAR(u, p.printed_utility[d], tol) << p.scenario.label << " dose " << d + 1;
    }
    if (p.printed_control_utility) {
      EXPECT_NEAR(expected_utility(independent_cells(0.17, 0.2), w), *p.printed_control_utility, 0.005);
    }
  }
  EXPECT_THROW(find_published("sim3_sc1"), std::invalid_argument);
}

TEST(Phase1Simulation, ToxicDrugTerminates) {
  const auto s = flat_tox_scenario(0.9);
  const auto design = quick_phase1_only();
  int stopped = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = simulate_phase1(s, design, seed);
    if (r.terminated && r.graduates.empty() &&
        static_cast<int>(r.data.patients.size()) < design.phase1.max_n) {
      ++stopped;
    }
  }
  EXPECT_GE(stopped, 95);
}

TEST(Phase1Simulation, SafeDrugReachesTopDose) {
  const auto s = flat_tox_scenario(0.0);
  const auto design = quick_phase1_only();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = simulate_phase1(s, design, seed);
    const auto counts = r.data.counts();
    EXPECT_GT(counts.n[4], 0) << "seed " << seed;
    EXPECT_FALSE(r.terminated);
    // one step per cohort while no DLT has been seen
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(r.cohort_doses[c], c);
  }
}

TEST(Phase1Simulation, Deterministic) {
  const auto s = find_published("sim1_sc2").scenario;
  const auto design = quick_phase1_only();
  const auto a = simulate_phase1(s, design, 12);
  const auto b = simulate_phase1(s, design, 12);
  EXPECT_EQ(a.data.patients, b.data.patients);
  EXPECT_EQ(a.cohort_doses, b.cohort_doses);
  EXPECT_EQ(a.graduates, b.graduates);
  EXPECT_EQ(a.selected_with_u, b.selected_with_u);
}

TEST(Phase1Simulation, SampleSizeIsWholeCohorts) {
  const auto s = find_published("sim1_sc1").scenario;
  const auto design = quick_phase1_only();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = simulate_phase1(s, design, seed);
    const int n = static_cast<int>(r.data.patients.size());
    EXPECT_LE(n, 30);
    if (!r.terminated) EXPECT_EQ(n, 30);
    EXPECT_EQ(n % 3, 0);
    if (r.selected_with_u) {
      EXPECT_NE(std::find(r.graduates.begin(), r.graduates.end(), *r.selected_with_u), r.graduates.end());
    }
  }
}

TEST(Phase2Simulation, StrongGraduateRecommended) {
  Scenario s = find_published("sim2_sc3").scenario;
  Phase2Config cfg;
  cfg.bar_draws = 10000;
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = simulate_phase2({0}, s, cfg, true, {}, seed);
    if (r.recommended_dose() == std::optional<std::size_t>(0)) ++hits;
  }
  EXPECT_GE(hits, 90);
}

TEST(Phase2Simulation, BarUpdateEveryCohort) {
  const Scenario s = find_published("sim2_sc4").scenario;
  Phase2Config cfg;
  cfg.bar_draws = 5000;
  const auto r = simulate_phase2({1, 2, 3}, s, cfg, true, {}, 7);
  ASSERT_EQ(r.arms.size(), 4u);
  EXPECT_EQ(r.arms[0].arm_id, 0);
  EXPECT_EQ(r.arm_doses, (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(r.allocations.front(), (std::vector<int>{3, 3, 2, 2}));
  EXPECT_EQ(r.xi_history.size(), 14u);
  EXPECT_EQ(r.allocations.size(), 15u);
  int total = 0;
  for (const auto& a : r.allocations) {
    EXPECT_EQ(std::accumulate(a.begin(), a.end(), 0), 10);
    total += std::accumulate(a.begin(), a.end(), 0);
  }
  EXPECT_EQ(total, 150);
  for (const auto& xi : r.xi_history) {
    EXPECT_NEAR(std::accumulate(xi.begin(), xi.end(), 0.0), 1.0, 1e-12);
  }
  int n = 0;
  for (const auto& a : r.arms) n += a.n();
  EXPECT_EQ(n, 150);
}

TEST(Phase2Simulation, NoGraduatesNoPhase2) {
  const auto s = flat_tox_scenario(0.9);
  const auto r = simulate_phase2({}, s, Phase2Config{}, true, {}, 1);
  EXPECT_TRUE(r.arms.empty());
  EXPECT_FALSE(r.recommended_dose().has_value());
  const auto t = simulate_trial(s, quick_seamless(), 3);
  EXPECT_FALSE(t.phase2.has_value());
  EXPECT_EQ(t.control_patients, 0);
  EXPECT_EQ(t.patients_total, t.patients_phase1);
  EXPECT_FALSE(t.selected_with_u.has_value());
}

TEST(TrialSimulation, SeamlessAccounting) {
  const auto s = find_published("sim2_sc3").scenario;
  const auto t = simulate_trial(s, quick_seamless(), 5);
  ASSERT_TRUE(t.phase2.has_value());
  int phase2 = 0;
  for (const auto& a : t.phase2->arms) phase2 += a.n();
  const int phase1 = std::accumulate(t.patients_phase1.begin(), t.patients_phase1.end(), 0);
  EXPECT_EQ(t.total_n(), phase1 + phase2);
  if (t.selected_with_u) EXPECT_TRUE(t.selected[*t.selected_with_u]);
}

TEST(Replications, SingleReplicateEqualsDirectCall) {
  const auto s = find_published("sim2_sc3").scenario;
  const auto design = quick_seamless();
  const auto oc = run_replications(s, design, 1, 1, 2024);
  const auto t = simulate_trial(s, design, replicate_seed(2024, 0));
  for (std::size_t d = 0; d < 5; ++d) {
    EXPECT_EQ(oc.avg_patients_total[d], t.patients_total[d]);
    EXPECT_EQ(oc.sel_pct[d], t.selected[d] ? 1.0 : 0.0);
    EXPECT_EQ(oc.sel_pct_with_u[d], t.selected_with_u == d ? 1.0 : 0.0);
  }
  EXPECT_EQ(oc.avg_total_n, t.total_n());
}

TEST(Replications, IndependentOfParallelism) {
  const auto s = find_published("sim2_sc2").scenario;
  const auto design = quick_seamless();
  const auto serial = run_replications(s, design, 12, 1, 77);
  const auto parallel = run_replications(s, design, 12, 8, 77);
  EXPECT_EQ(serial, parallel);
  EXPECT_NE(serial, run_replications(s, design, 12, 8, 78));
}

TEST(Replications, AggregateInvariants) {
  const auto s = find_published("sim2_sc6").scenario;
  std::vector<int> order;
  const auto oc = run_replications(s, quick_seamless(), 16, 4, 5,
                                   [&](int rep, const TrialOutcome&) { order.push_back(rep); });
  double sum = oc.avg_control_patients;
  for (std::size_t d = 0; d < 5; ++d) {
    sum += oc.avg_patients_total[d];
    EXPECT_LE(oc.sel_pct_with_u[d], oc.sel_pct[d]);
    EXPECT_GE(oc.avg_patients_total[d], oc.avg_patients_phase1[d]);
  }
  EXPECT_NEAR(sum, oc.avg_total_n, 1e-12);
  const double with_u = std::accumulate(oc.sel_pct_with_u.begin(), oc.sel_pct_with_u.end(), 0.0);
  EXPECT_NEAR(with_u + oc.pct_no_recommendation, 1.0, 1e-12);
  std::vector<int> expected(16);
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(order, expected);
  EXPECT_EQ(oc.n_failed, 0);
}

TEST(Replications, PhaseOneOnlyMode) {
  const auto s = find_published("sim1_sc3").scenario;
  const auto oc = run_replications(s, quick_phase1_only(), 8, 8, 3);
  EXPECT_EQ(oc.avg_control_patients, 0.0);
  for (std::size_t d = 0; d < 5; ++d) {
    EXPECT_EQ(oc.avg_patients_total[d], oc.avg_patients_phase1[d]);
    EXPECT_LE(oc.sel_pct_with_u[d], oc.sel_pct[d]);
  }
  EXPECT_LE(oc.avg_total_n, 30.0);
}

TEST(Replications, RejectsBadArguments) {
  const auto s = find_published("sim2_sc1").scenario;
  EXPECT_THROW(run_replications(s, quick_seamless(), 0, 1, 1), std::invalid_argument);
  auto bad = quick_seamless();
  bad.phase1.start_dose = 9;
  EXPECT_THROW(run_replications(s, bad, 1, 1, 1), std::invalid_argument);
}

TEST(Replications, ComparatorModelRuns) {
  const auto s = find_published("sim2_sc2").scenario;
  auto design = quick_seamless();
  design.model = DoseModel::LogitEmax;
  const auto oc = run_replications(s, design, 4, 4, 9);
  EXPECT_EQ(oc.n_failed, 0);
  EXPECT_EQ(oc, run_replications(s, design, 4, 1, 9));
}
