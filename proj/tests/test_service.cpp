#include "pedoop/config.hpp"
#include "pedoop/report.hpp"
#include "pedoop/scenarios.hpp"
#include "pedoop/service/http.hpp"
#include "pedoop/validation.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <thread>

using namespace pedoop;
using namespace pedoop::service;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("pedoop-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string fixed_clock() { return "2024-01-01T00:00:00.000Z"; }

// Small chains and a short phase II so a whole trial runs in well under a second.
json quick_config() {
  return json{{"design", {{"preset", "seamless"}}},
              {"phase1", {{"max_n", 9}}},
              {"phase2", {{"max_n", 30}, {"bar_draws", 2000}}},
              {"mcmc", {{"iterations", 400}, {"burn_in", 200}, {"thin", 2}}}};
}

json patient_json(const PatientRecord& p) {
  std::vector<double> conc;
  for (double lc : p.log_concentrations) conc.push_back(std::exp(lc));
  return {{"times", p.times},
          {"concentrations", conc},
          {"dlt", p.dlt},
          {"efficacy", p.efficacy ? json(*p.efficacy) : json()}};
}

json cohort_body(const Scenario& s, std::size_t dose, int size, std::uint64_t seed, int force_dlt = -1) {
  json list = json::array();
  Rng rng = make_rng(seed);
  for (int i = 0; i < size; ++i) {
    auto p = generate_patient(s, dose, rng);
    if (force_dlt >= 0) p.dlt = force_dlt;
    list.push_back(patient_json(p));
  }
  return {{"patients", list}};
}

int status_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    return e.status();
  }
  return 200;
}

constexpr const char* kSampleConfig = R"(scenarios:
  - preset: sim2_sc3
  - label: custom
    doses: [10, 20, 40]
    true_tox: [0.05, 0.1, 0.3]
    true_eff: [0.2, 0.3, 0.6]
    pk: {v_shape: 6, v_rate: 1.5, k_shape: 5, k_rate: 2, sigma: 0.5}
design:
  preset: seamless
  model: logit_emax
phase1:
  safety_threshold: 0.35
  cohort_size: 2
  max_n: 20
  start_dose: 2
phase2:
  bar_draws: 5000
  weights: {eff_no_tox: 1, eff_tox: 0.5, no_eff_no_tox: 0.3, no_eff_tox: 0}
mcmc:
  preset: desk
prior:
  beta0: {mean: -2, variance: 4}
  ed50: {shape: 10, rate: 0.25}
replication:
  n_reps: 50
  master_seed: 99
  parallelism: 4
output:
  precision: 8
)";

}  // namespace

TEST(Config, ParsesAllSections) {
  const auto rc = parse_run_config_text(kSampleConfig);
  ASSERT_EQ(rc.scenarios.size(), 2u);
  EXPECT_EQ(rc.scenarios[0], find_published("sim2_sc3").scenario);
  EXPECT_EQ(rc.scenarios[1].grid.size(), 3u);
  EXPECT_EQ(rc.scenarios[1].pk.k_rate, 2.0);
  EXPECT_EQ(rc.design.model, DoseModel::LogitEmax);
  EXPECT_EQ(rc.design.phase1.target_tox, 0.2);
  EXPECT_EQ(rc.design.phase1.safety_threshold.value(), 0.35);
  EXPECT_EQ(rc.design.phase1.start_dose, 1u);
  EXPECT_EQ(rc.design.phase2.weights.s3, 0.3);
  EXPECT_EQ(rc.design.mcmc, desk_mcmc());
  EXPECT_EQ(rc.design.prior.beta0.mean, -2.0);
  EXPECT_EQ(rc.replication.master_seed, 99u);
  EXPECT_EQ(rc.output.precision, 8);
}

TEST(Config, RoundTrip) {
  const auto rc = parse_run_config_text(kSampleConfig);
  const auto again = parse_run_config_text(serialize_run_config(rc));
  EXPECT_EQ(rc, again);
  EXPECT_EQ(serialize_run_config(rc), serialize_run_config(again));
}

TEST(Config, SampleFilesLoad) {
  for (const auto& entry : fs::directory_iterator(PEDOOP_SOURCE_DIR "/configs")) {
    if (entry.path().extension() != ".yaml") continue;
    EXPECT_NO_THROW(load_run_config(entry.path().string())) << entry.path();
  }
}

TEST(Config, UnknownKeyReportsLine) {
  const std::string text =
      "scenarios:\n  - preset: sim2_sc1\nphase1:\n  cohort_size: 3\n  cohrt: 4\nreplication:\n  master_seed: 1\n";
  try {
    parse_run_config_text(text);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("phase1.cohrt"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 5"), std::string::npos) << msg;
  }
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_run_config_text("scenarios:\n  - preset: sim2_sc1\n"), ConfigError);
  EXPECT_THROW(parse_run_config_text("scenarios: []\nreplication: {master_seed: 1}\n"), ConfigError);
  EXPECT_THROW(parse_run_config_text("scenarios:\n  - preset: nope\nreplication: {master_seed: 1}\n"),
               ConfigError);
  EXPECT_THROW(parse_run_config_text(
                   "scenarios:\n  - preset: sim2_sc1\nphase1: {max_n: many}\nreplication: {master_seed: 1}\n"),
               ConfigError);
  EXPECT_THROW(parse_run_config_text(
                   "scenarios:\n  - preset: sim2_sc1\nphase1: {start_dose: 6}\nreplication: {master_seed: 1}\n"),
               ConfigError);
  EXPECT_THROW(parse_run_config_text("scenarios: [\n"), ConfigError);
  try {
    parse_run_config_text("scenarios:\n  - preset: sim2_sc1\nreplication: {n_reps: 5}\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("master_seed"), std::string::npos);
  }
}

TEST(Report, CsvShape) {
  const auto s = find_published("sim2_sc2").scenario;
  OperatingCharacteristics oc;
  oc.avg_patients_total = {1, 2, 3, 4, 5};
  oc.sel_pct = {0.1, 0.2, 0.3, 0.4, 0.5};
  oc.sel_pct_with_u = {0, 0.1, 0.1, 0.2, 0.3};
  oc.avg_control_patients = 7.5;
  std::ostringstream seamless;
  write_oc_csv(seamless, s, oc, seamless_design());
  std::vector<std::string> lines;
  std::istringstream in(seamless.str());
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], kOcCsvHeader);
  EXPECT_EQ(lines[1], "1,15,0.03,0.2,0.508,1,0.1,0");
  EXPECT_EQ(lines[6], "control,,0.17,0.2,0.452,7.5,,");
  std::ostringstream phase1;
  write_oc_csv(phase1, s, oc, phase1_only_design());
  const std::string text = phase1.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
}

TEST(Validation, AllChecksPass) {
  const auto results = run_validation();
  EXPECT_EQ(results.size(), 9u);
  for (const auto& r : results) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
  EXPECT_TRUE(all_passed(results));
}

TEST(Validation, BrokenEffectIsCaught) {
  ValidationHooks hooks;
  hooks.closed_form_effect = [](double d, const PkPopulation& pk, const PdParams& pd) {
    return cumulative_effect_closed_form(d, pk, pd) * (1 + 1e-6);
  };
  const auto results = run_validation(hooks);
  int failed = 0;
  for (const auto& r : results) {
    if (!r.pass) {
      ++failed;
      EXPECT_EQ(r.name, check_effect_closed_form({}).name);
    }
  }
  EXPECT_EQ(failed, 1);
}

TEST(Service, CreateAssignsFirstCohort) {
  TempDir dir;
  TrialService svc(dir.path(), fixed_clock);
  const auto out = svc.create({{"trialId", "t1"}, {"doses", {15, 30, 60, 90, 120}}, {"config", quick_config()}});
  EXPECT_EQ(out["trialId"], "t1");
  EXPECT_EQ(out["cohort"]["dose"], 1);
  EXPECT_EQ(out["cohort"]["size"], 3);
  const auto events = svc.events("t1");
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].kind, EventKind::Created);
  EXPECT_EQ(events[1].kind, EventKind::CohortAssigned);
  EXPECT_EQ(events[1].sequence, 2u);
  const auto auto_id = svc.create({{"doses", {1, 2}}});
  EXPECT_EQ(auto_id["trialId"], "trial-0002");
}

TEST(Service, EscalatesAfterCleanCohortAndMatchesLibrary) {
  TempDir dir;
  TrialService svc(dir.path(), fixed_clock);
  svc.create({{"trialId", "esc"}, {"doses", {15, 30, 60, 90, 120}}, {"config", quick_config()}});
  const auto s = find_published("sim2_sc2").scenario;
  const auto out = svc.submit_phase1_cohort("esc", cohort_body(s, 0, 3, 1, 0));
  EXPECT_EQ(out["decision"]["action"], "escalate");
  EXPECT_EQ(out["nextCohort"]["dose"], 2);

  // Same fit outside the service with the recorded seed.
  const auto state = svc.replay_from_disk("esc");
  Phase1Data data(state.data.grid);
  data.patients = state.data.patients;
  const auto design = design_from_json(quick_config(), 5);
  const auto curves = fit_dose_curves(data, design, false, decision_seed("esc", 4));
  const auto dec = next_dose(EscalationState::from_data(data, 0), curves.tox, design.phase1);
  EXPECT_EQ(out["decision"], service::detail::decision_json(dec));
  EXPECT_EQ(svc.events("esc")[3].payload["seed"].get<std::uint64_t>(), decision_seed("esc", 4));
}

TEST(Service, ErrorStatuses) {
  TempDir dir;
  TrialService svc(dir.path(), fixed_clock);
  const json doses = {15, 30, 60, 90, 120};
  svc.create({{"trialId", "e"}, {"doses", doses}, {"config", quick_config()}});
  const auto s = find_published("sim2_sc2").scenario;
  EXPECT_EQ(status_of([&] { svc.get_trial("missing"); }), 404);
  EXPECT_EQ(status_of([&] { svc.get_posterior("e"); }), 404);
  EXPECT_EQ(status_of([&] { svc.complete_phase1("e", json()); }), 409);
  EXPECT_EQ(status_of([&] { svc.submit_phase2_outcomes("e", {{"outcomes", json::array()}}); }), 409);
  EXPECT_EQ(status_of([&] { svc.create({{"trialId", "e"}, {"doses", doses}}); }), 409);
  EXPECT_EQ(status_of([&] { svc.create({{"doses", {30, 15}}}); }), 422);
  EXPECT_EQ(status_of([&] { svc.create({{"doses", doses}, {"config", {{"phase1", {{"bogus", 1}}}}}}); }), 422);
  EXPECT_EQ(status_of([&] { svc.create({{"trialId", "bad id"}, {"doses", doses}}); }), 422);
  EXPECT_EQ(status_of([&] { svc.submit_phase1_cohort("e", cohort_body(s, 0, 2, 1)); }), 422);
  auto wrong_dose = cohort_body(s, 0, 3, 1);
  wrong_dose["patients"][0]["dose"] = 3;
  EXPECT_EQ(status_of([&] { svc.submit_phase1_cohort("e", wrong_dose); }), 409);
  auto bad_dlt = cohort_body(s, 0, 3, 1);
  bad_dlt["patients"][1]["dlt"] = 2;
  EXPECT_EQ(status_of([&] { svc.submit_phase1_cohort("e", bad_dlt); }), 422);
  // failed requests leave no events behind
  EXPECT_EQ(svc.events("e").size(), 2u);
}

TEST(Service, FullTrialAndReplay) {
  TempDir dir;
  const auto s = find_published("sim2_sc3").scenario;
  json final_state;
  {
    TrialService svc(dir.path(), fixed_clock);
    svc.create({{"trialId", "full"}, {"doses", {15, 30, 60, 90, 120}}, {"config", quick_config()}});
    std::uint64_t seed = 100;
    for (int guard = 0; guard < 10; ++guard) {
      const auto st = svc.get_trial("full");
      if (st["phase"] != "phase1" || st["awaitingGraduation"].get<bool>()) break;
      const auto& c = st["phase1"]["pendingCohort"];
      svc.submit_phase1_cohort("full", cohort_body(s, c["dose"].get<std::size_t>() - 1, c["size"], seed++));
    }
    auto st = svc.get_trial("full");
    ASSERT_EQ(st["phase"], "phase1");
    ASSERT_EQ(st["phase1"]["patients"].size(), 9u);
    EXPECT_NE(svc.get_posterior("full")["doses"].size(), 0u);
    const auto grad = svc.complete_phase1("full", json());
    st = svc.get_trial("full");
    if (grad["graduates"].empty()) {
      EXPECT_EQ(st["phase"], "terminated");
    } else {
      Rng rng = make_rng(5);
      int rounds = 0;
      while (st["phase"] == "phase2") {
        json outcomes = json::array();
        const auto alloc = st["phase2"]["pendingAllocation"].get<std::vector<int>>();
        for (std::size_t r = 0; r < alloc.size(); ++r) {
          const auto& arm = st["phase2"]["arms"][r];
          const double pt = arm["dose"].is_null() ? s.control_tox : s.true_tox[arm["dose"].get<int>() - 1];
          const double pe = arm["dose"].is_null() ? s.control_eff : s.true_eff[arm["dose"].get<int>() - 1];
          for (int i = 0; i < alloc[r]; ++i) {
            outcomes.push_back({{"arm", arm["arm"]}, {"dlt", bernoulli(rng, pt)}, {"efficacy", bernoulli(rng, pe)}});
          }
        }
        svc.submit_phase2_outcomes("full", {{"outcomes", outcomes}});
        st = svc.get_trial("full");
        ++rounds;
      }
      EXPECT_EQ(rounds, 3);
      EXPECT_EQ(st["phase"], "completed");
      EXPECT_EQ(st["phase2"]["n"], 30);
      EXPECT_EQ(st["phase2"]["xiUpdates"], 2);
    }
    final_state = st;
    EXPECT_EQ(to_json(svc.replay_from_disk("full")), final_state);
  }
  // a fresh process sees the same trial
  TrialService reopened(dir.path(), fixed_clock);
  EXPECT_EQ(reopened.get_trial("full"), final_state);
}

TEST(Service, ReplayRejectsGaps) {
  TempDir dir;
  TrialService svc(dir.path(), fixed_clock);
  svc.create({{"trialId", "g"}, {"doses", {1, 2, 3}}});
  auto events = svc.events("g");
  events[1].sequence = 5;
  EXPECT_THROW(replay(events), std::runtime_error);
}

TEST(Http, RoundTrip) {
  TempDir dir;
  TrialService svc(dir.path(), fixed_clock);
  httplib::Server server;
  register_routes(server, svc);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  const json body{{"trialId", "h1"}, {"doses", {15, 30, 60}}, {"config", quick_config()}};
  auto res = client.Post("/trials", body.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201);
  EXPECT_EQ(json::parse(res->body)["cohort"]["dose"], 1);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");

  res = client.Get("/trials/h1");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["phase"], "phase1");

  res = client.Get("/trials/unknown");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  res = client.Post("/trials/h1/phase1/cohorts", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);
  res = client.Post("/trials/h1/phase1/complete", "", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 409);
  res = client.Get("/nowhere");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);

  server.stop();
  worker.join();
}
