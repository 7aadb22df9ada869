#pragma once

// Trial state as a pure fold over its event log. Decisions are computed once
// by the service and stored in event payloads, so replay never re-samples.
// Dose and arm numbers in JSON are 1-based for doses, 0 for the control arm.

#include "pedoop/config.hpp"
#include "pedoop/data.hpp"
#include "pedoop/phase2.hpp"
#include "pedoop/service/events.hpp"
#include "pedoop/simulation.hpp"

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <optional>
#include <string>
#include <vector>

namespace pedoop::service {

using nlohmann::json;

// Design sections (design, phase1, phase2, mcmc, prior, comparator_prior) given as JSON.
inline TrialDesign design_from_json(const json& config, std::size_t grid_size) {
  const YAML::Node node = YAML::Load(config.dump());
  if (!node.IsMap()) throw ConfigError("config must be an object");
  cfg::Section root(node, "config");
  TrialDesign d = read_design(root);
  root.finish();
  d.validate(grid_size);
  return d;
}

struct PendingCohort {
  std::size_t dose = 0;
  int size = 0;
};

struct TrialState {
  std::string trial_id;
  std::uint64_t last_sequence = 0;
  std::string phase;  // phase1, phase2, completed, terminated
  json config = json::object();
  TrialDesign design;
  Phase1Data data;
  std::size_t current_dose = 0;
  std::optional<PendingCohort> pending_cohort;
  json last_decision;   // null until the first escalation fit
  json posterior;       // null until the first fit
  std::optional<std::vector<std::size_t>> graduates;
  std::optional<std::size_t> selected_with_u;
  std::vector<ArmState> arms;
  std::vector<std::optional<std::size_t>> arm_doses;  // aligned with arms; empty for control
  std::vector<double> xi;
  int xi_updates = 0;
  std::vector<int> pending_allocation;
  json recommendation;  // null until recommended
  std::string termination_reason;

  int phase1_n() const { return static_cast<int>(data.patients.size()); }
  int phase2_n() const {
    int n = 0;
    for (const auto& a : arms) n += a.n();
    return n;
  }
  bool awaiting_graduation() const {
    return phase == "phase1" && !pending_cohort && phase1_n() >= design.phase1.max_n;
  }
};

inline json patient_to_json(const PatientRecord& p) {
  return {{"dose", p.dose_index + 1},
          {"times", p.times},
          {"log_concentrations", p.log_concentrations},
          {"dlt", p.dlt},
          {"efficacy", p.efficacy ? json(*p.efficacy) : json()}};
}

inline PatientRecord patient_from_json(const json& j) {
  PatientRecord p;
  p.dose_index = j.at("dose").get<std::size_t>() - 1;
  p.times = j.at("times").get<std::vector<double>>();
  p.log_concentrations = j.at("log_concentrations").get<std::vector<double>>();
  p.dlt = j.at("dlt").get<int>();
  if (!j.at("efficacy").is_null()) p.efficacy = j.at("efficacy").get<int>();
  return p;
}

inline std::vector<int> one_based(const std::vector<std::size_t>& v) {
  std::vector<int> out;
  for (auto x : v) out.push_back(static_cast<int>(x) + 1);
  return out;
}

// Applies one event. Throws if the event does not fit the state.
inline void apply(TrialState& s, const TrialEvent& e) {
  if (e.sequence != s.last_sequence + 1) {
    throw std::runtime_error("event sequence " + std::to_string(e.sequence) + " follows " +
                             std::to_string(s.last_sequence));
  }
  const json& p = e.payload;
  switch (e.kind) {
    case EventKind::Created: {
      s.trial_id = e.trial_id;
      s.config = p.at("config");
      s.data = Phase1Data(DoseGrid(p.at("doses").get<std::vector<double>>()));
      s.design = design_from_json(s.config, s.data.grid.size());
      s.current_dose = s.design.phase1.start_dose;
      s.phase = "phase1";
      break;
    }
    case EventKind::CohortAssigned: {
      s.current_dose = p.at("dose").get<std::size_t>() - 1;
      s.pending_cohort = PendingCohort{s.current_dose, p.at("size").get<int>()};
      break;
    }
    case EventKind::OutcomesRecorded: {
      if (p.at("phase").get<int>() == 1) {
        if (p.contains("patients")) {
          for (const auto& pj : p.at("patients")) s.data.patients.push_back(patient_from_json(pj));
          s.pending_cohort.reset();
        }
        if (p.contains("efficacyUpdates")) {
          for (const auto& u : p.at("efficacyUpdates")) {
            s.data.patients.at(u.at("patient").get<std::size_t>() - 1).efficacy =
                u.at("efficacy").get<int>();
          }
        }
      } else {
        for (const auto& o : p.at("outcomes")) {
          const int arm = o.at("arm").get<int>();
          s.arms.at(static_cast<std::size_t>(arm)).add(o.at("dlt").get<int>(),
                                                       o.at("efficacy").get<int>());
        }
        s.pending_allocation.clear();
      }
      break;
    }
    case EventKind::PosteriorComputed: {
      s.posterior = p.at("summary");
      s.posterior["includeEfficacy"] = p.at("includeEfficacy");
      s.posterior["sequence"] = e.sequence;
      if (!p.at("decision").is_null()) s.last_decision = p.at("decision");
      break;
    }
    case EventKind::Graduated: {
      std::vector<std::size_t> g;
      for (int d : p.at("graduates").get<std::vector<int>>()) g.push_back(static_cast<std::size_t>(d - 1));
      s.graduates = g;
      if (!p.at("selectedWithUtility").is_null()) {
        s.selected_with_u = p.at("selectedWithUtility").get<std::size_t>() - 1;
      }
      break;
    }
    case EventKind::Randomized: {
      if (p.contains("arms")) {
        s.arms.clear();
        s.arm_doses.clear();
        for (const auto& a : p.at("arms")) {
          s.arms.push_back(ArmState{a.at("arm").get<int>(), {}});
          s.arm_doses.push_back(a.at("dose").is_null()
                                    ? std::nullopt
                                    : std::optional<std::size_t>(a.at("dose").get<std::size_t>() - 1));
        }
      }
      if (!p.at("xi").is_null()) {
        s.xi = p.at("xi").get<std::vector<double>>();
        ++s.xi_updates;
      }
      s.pending_allocation = p.at("allocation").get<std::vector<int>>();
      s.phase = "phase2";
      break;
    }
    case EventKind::Recommended: {
      s.recommendation = p;
      s.phase = "completed";
      break;
    }
    case EventKind::Terminated: {
      s.termination_reason = p.at("reason").get<std::string>();
      s.pending_cohort.reset();
      s.pending_allocation.clear();
      s.phase = "terminated";
      break;
    }
  }
  s.last_sequence = e.sequence;
}

inline TrialState replay(const std::vector<TrialEvent>& events) {
  TrialState s;
  for (const auto& e : events) apply(s, e);
  return s;
}

inline json to_json(const TrialState& s) {
  json j;
  j["trialId"] = s.trial_id;
  j["phase"] = s.phase;
  j["lastSequence"] = s.last_sequence;
  j["doses"] = std::vector<double>(s.data.grid.amounts().begin(), s.data.grid.amounts().end());
  j["config"] = s.config;
  j["awaitingGraduation"] = s.awaiting_graduation();

  json p1;
  p1["currentDose"] = s.current_dose + 1;
  p1["pendingCohort"] = s.pending_cohort
                            ? json{{"dose", s.pending_cohort->dose + 1}, {"size", s.pending_cohort->size}}
                            : json();
  json patients = json::array();
  for (const auto& p : s.data.patients) patients.push_back(patient_to_json(p));
  p1["patients"] = patients;
  const auto c = s.data.counts();
  p1["counts"] = {{"n", c.n}, {"dlt", c.y}, {"nEfficacy", c.n_eff}, {"responses", c.z}};
  j["phase1"] = p1;
  j["lastDecision"] = s.last_decision;
  j["posterior"] = s.posterior;
  j["graduates"] = s.graduates ? json(one_based(*s.graduates)) : json();
  j["selectedWithUtility"] = s.selected_with_u ? json(*s.selected_with_u + 1) : json();

  if (!s.arms.empty()) {
    json p2;
    json arms = json::array();
    for (std::size_t r = 0; r < s.arms.size(); ++r) {
      const auto& a = s.arms[r];
      arms.push_back({{"arm", a.arm_id},
                      {"dose", s.arm_doses[r] ? json(*s.arm_doses[r] + 1) : json()},
                      {"y", a.y},
                      {"n", a.n()}});
    }
    p2["arms"] = arms;
    p2["xi"] = s.xi;
    p2["xiUpdates"] = s.xi_updates;
    p2["pendingAllocation"] = s.pending_allocation;
    p2["n"] = s.phase2_n();
    j["phase2"] = p2;
  } else {
    j["phase2"] = json();
  }
  j["recommendation"] = s.recommendation;
  j["terminationReason"] = s.termination_reason.empty() ? json() : json(s.termination_reason);
  return j;
}

}  // namespace pedoop::service
