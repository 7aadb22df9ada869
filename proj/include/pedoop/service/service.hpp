#pragma once

// Trial conduct service. Each mutation validates the request against the
// replayed state, calls the library for the decision, and appends the
// resulting events. Mutations on one trial are serialized.

#include "pedoop/curves.hpp"
#include "pedoop/phase1.hpp"
#include "pedoop/phase2.hpp"
#include "pedoop/random.hpp"
#include "pedoop/service/events.hpp"
#include "pedoop/service/trial.hpp"
#include "pedoop/simulation.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <regex>
#include <stdexcept>
#include <string>
#include <vector>

namespace pedoop::service {

class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& msg) : std::runtime_error(msg), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

inline ServiceError not_found(const std::string& m) { return {404, m}; }
inline ServiceError conflict(const std::string& m) { return {409, m}; }
inline ServiceError invalid(const std::string& m) { return {422, m}; }

namespace detail {

inline const json& field(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw invalid(where + "." + key + " is required");
  return obj.at(key);
}

inline int binary(const json& v, const std::string& where) {
  if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
    throw invalid(where + " must be 0 or 1");
  }
  return v.get<int>();
}

inline std::vector<double> numbers(const json& v, const std::string& where) {
  if (!v.is_array()) throw invalid(where + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw invalid(where + " must be an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline json summary_json(const DoseCurves& c) {
  auto one = [](const CurveMatrix& m) {
    const auto s = summarize(m);
    return json{{"mean", s.mean}, {"lower", s.lower}, {"upper", s.upper}};
  };
  return {{"tox", one(c.tox)}, {"eff", one(c.eff)}};
}

inline json decision_json(const DoseDecision& d) {
  return {{"action", to_string(d.action)},
          {"dose", d.action == Action::Terminate ? json() : json(d.dose + 1)},
          {"toxMean", d.tox_mean},
          {"overdoseProb", d.overdose_prob},
          {"safe", d.safe}};
}

}  // namespace detail

// Seed for the decision recorded by event `sequence` of `trial_id`.
inline std::uint64_t decision_seed(const std::string& trial_id, std::uint64_t sequence) {
  return derive_seed(hash_string(trial_id), sequence);
}

class TrialService {
 public:
  using Clock = std::function<std::string()>;

  explicit TrialService(std::filesystem::path data_dir, Clock clock = utc_timestamp)
      : log_(std::move(data_dir)), clock_(std::move(clock)) {}

  json create(const json& body) {
    if (!body.is_object()) throw invalid("request body must be a JSON object");
    std::vector<double> doses = detail::numbers(detail::field(body, "doses", "body"), "body.doses");
    json config = body.contains("config") ? body.at("config") : json::object();
    if (!config.is_object()) throw invalid("body.config must be an object");
    try {
      design_from_json(config, DoseGrid(doses).size());
    } catch (const std::exception& e) {
      throw invalid(e.what());
    }

    std::string id;
    std::unique_lock registry(registry_mutex_);
    if (body.contains("trialId")) {
      if (!body.at("trialId").is_string()) throw invalid("body.trialId must be a string");
      id = body.at("trialId").get<std::string>();
      static const std::regex ok("[A-Za-z0-9_-]{1,64}");
      if (!std::regex_match(id, ok)) throw invalid("body.trialId must match [A-Za-z0-9_-]{1,64}");
      if (taken(id)) throw conflict("trial " + id + " already exists");
    } else {
      for (std::size_t n = log_.trial_ids().size() + 1;; ++n) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "trial-%04zu", n);
        if (!taken(buf)) {
          id = buf;
          break;
        }
      }
    }
    auto& entry = entries_[id];
    entry = std::make_unique<Entry>();
    std::lock_guard lock(entry->mutex);
    registry.unlock();

    Builder b(id, TrialState{}, clock_);
    b.emit(EventKind::Created, {{"doses", doses}, {"config", config}});
    const auto& d = b.state.design;
    b.emit(EventKind::CohortAssigned,
           {{"phase", 1}, {"dose", d.phase1.start_dose + 1},
            {"size", std::min(d.phase1.cohort_size, d.phase1.max_n)}});
    commit(*entry, b);
    return {{"trialId", id},
            {"cohort", {{"dose", b.state.pending_cohort->dose + 1}, {"size", b.state.pending_cohort->size}}},
            {"state", to_json(b.state)}};
  }

  json submit_phase1_cohort(const std::string& id, const json& body) {
    return mutate(id, [&](Builder& b) {
      auto& s = b.state;
      if (s.phase != "phase1" || !s.pending_cohort) {
        throw conflict("trial " + id + " has no phase I cohort awaiting outcomes");
      }
      const auto pending = *s.pending_cohort;
      const json& list = detail::field(body, "patients", "body");
      if (!list.is_array()) throw invalid("body.patients must be an array");
      if (static_cast<int>(list.size()) != pending.size) {
        throw invalid("expected " + std::to_string(pending.size) + " patients, got " +
                      std::to_string(list.size()));
      }
      json patients = json::array();
      Phase1Data check(s.data.grid);
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string where = "patients[" + std::to_string(i) + "]";
        PatientRecord p = parse_patient(list[i], where, pending.dose, s.data.grid.size());
        if (p.dose_index != pending.dose) {
          throw conflict(where + " was treated at dose " + std::to_string(p.dose_index + 1) +
                         " but the assigned dose is " + std::to_string(pending.dose + 1));
        }
        check.patients.push_back(p);
        patients.push_back(patient_to_json(p));
      }
      try {
        check.validate();
      } catch (const std::exception& e) {
        throw invalid(e.what());
      }
      b.emit(EventKind::OutcomesRecorded, {{"phase", 1}, {"patients", patients}});

      const auto& cfg = s.design.phase1;
      json out;
      if (s.phase1_n() >= cfg.max_n) {
        out["decision"] = json();
        out["nextCohort"] = json();
        out["awaitingGraduation"] = true;
        return out;
      }
      const std::uint64_t seed = decision_seed(id, b.next_sequence());
      const auto curves = fit_dose_curves(s.data, s.design, false, seed);
      const auto dec = next_dose(EscalationState::from_data(s.data, s.current_dose), curves.tox, cfg);
      b.emit(EventKind::PosteriorComputed, {{"seed", seed},
                                            {"includeEfficacy", false},
                                            {"summary", detail::summary_json(curves)},
                                            {"decision", detail::decision_json(dec)}});
      out["decision"] = detail::decision_json(dec);
      out["posterior"] = detail::summary_json(curves);
      if (dec.action == Action::Terminate) {
        b.emit(EventKind::Terminated, {{"reason", "no dose satisfies the safety rule"}});
        out["nextCohort"] = json();
      } else {
        const int size = std::min(cfg.cohort_size, cfg.max_n - s.phase1_n());
        b.emit(EventKind::CohortAssigned, {{"phase", 1}, {"dose", dec.dose + 1}, {"size", size}});
        out["nextCohort"] = {{"dose", dec.dose + 1}, {"size", size}};
      }
      out["awaitingGraduation"] = false;
      return out;
    });
  }

  json complete_phase1(const std::string& id, const json& body) {
    return mutate(id, [&](Builder& b) {
      auto& s = b.state;
      if (s.phase != "phase1") throw conflict("trial " + id + " is not in phase I");
      if (!s.awaiting_graduation()) {
        throw conflict("phase I enrollment is not complete (" + std::to_string(s.phase1_n()) + " of " +
                       std::to_string(s.design.phase1.max_n) + " patients)");
      }
      if (!body.is_null() && !body.is_object()) throw invalid("request body must be a JSON object");
      if (body.is_object() && body.contains("efficacy")) {
        const json& list = body.at("efficacy");
        if (!list.is_array()) throw invalid("body.efficacy must be an array");
        json updates = json::array();
        for (std::size_t i = 0; i < list.size(); ++i) {
          const std::string where = "efficacy[" + std::to_string(i) + "]";
          const json& pj = detail::field(list[i], "patient", where);
          if (!pj.is_number_integer() || pj.get<long>() < 1 || pj.get<long>() > s.phase1_n()) {
            throw invalid(where + ".patient must be a 1-based phase I patient number");
          }
          const int eff = detail::binary(detail::field(list[i], "efficacy", where), where + ".efficacy");
          updates.push_back({{"patient", pj.get<int>()}, {"efficacy", eff}});
        }
        if (!updates.empty()) b.emit(EventKind::OutcomesRecorded, {{"phase", 1}, {"efficacyUpdates", updates}});
      }

      const std::uint64_t fit_seed = decision_seed(id, b.next_sequence());
      const auto curves = fit_dose_curves(s.data, s.design, true, fit_seed);
      b.emit(EventKind::PosteriorComputed, {{"seed", fit_seed},
                                            {"includeEfficacy", true},
                                            {"summary", detail::summary_json(curves)},
                                            {"decision", json()}});
      const auto grads = graduate(curves, s.design.phase1);
      const std::uint64_t sel_seed = decision_seed(id, b.next_sequence());
      const auto sel = select_with_utility(grads, s.data, s.design.phase2.weights, sel_seed,
                                           s.design.phase2.bar_draws);
      b.emit(EventKind::Graduated, {{"graduates", one_based(grads)},
                                    {"selectedWithUtility", sel ? json(*sel + 1) : json()},
                                    {"seed", sel_seed}});
      json out{{"graduates", one_based(grads)}, {"selectedWithUtility", sel ? json(*sel + 1) : json()}};
      if (grads.empty()) {
        b.emit(EventKind::Terminated, {{"reason", "no dose met the graduation criteria"}});
        out["phase2"] = json();
        return out;
      }
      if (!s.design.run_phase2) {
        b.emit(EventKind::Recommended, {{"candidates", one_based(grads)}, {"xi", json()},
                                        {"arm", json()}, {"dose", *sel + 1}});
        out["phase2"] = json();
        return out;
      }
      json arms = json::array();
      if (s.design.include_control) arms.push_back({{"arm", 0}, {"dose", json()}});
      for (std::size_t r = 0; r < grads.size(); ++r) {
        arms.push_back({{"arm", static_cast<int>(r) + 1}, {"dose", grads[r] + 1}});
      }
      const auto& p2 = s.design.phase2;
      const auto alloc = equal_allocation(std::min(p2.cohort_size, p2.max_n), arms.size());
      b.emit(EventKind::Randomized, {{"arms", arms}, {"xi", json()}, {"allocation", alloc}});
      out["phase2"] = {{"arms", arms}, {"allocation", alloc}};
      return out;
    });
  }

  json submit_phase2_outcomes(const std::string& id, const json& body) {
    return mutate(id, [&](Builder& b) {
      auto& s = b.state;
      if (s.phase != "phase2" || s.pending_allocation.empty()) {
        throw conflict("trial " + id + " has no phase II cohort awaiting outcomes");
      }
      const json& list = detail::field(body, "outcomes", "body");
      if (!list.is_array()) throw invalid("body.outcomes must be an array");
      std::vector<int> per_arm(s.arms.size(), 0);
      json outcomes = json::array();
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string where = "outcomes[" + std::to_string(i) + "]";
        const json& arm = detail::field(list[i], "arm", where);
        if (!arm.is_number_integer()) throw invalid(where + ".arm must be an integer");
        const auto idx = arm_index(s, arm.get<int>());
        if (!idx) throw invalid(where + ".arm " + std::to_string(arm.get<int>()) + " does not exist");
        const int t = detail::binary(detail::field(list[i], "dlt", where), where + ".dlt");
        const int e = detail::binary(detail::field(list[i], "efficacy", where), where + ".efficacy");
        ++per_arm[*idx];
        outcomes.push_back({{"arm", *idx}, {"dlt", t}, {"efficacy", e}});
      }
      if (per_arm != s.pending_allocation) {
        throw conflict("outcomes do not match the pending allocation");
      }
      b.emit(EventKind::OutcomesRecorded, {{"phase", 2}, {"outcomes", outcomes}});

      const auto& cfg = s.design.phase2;
      const auto pooled = pooled_phase1(s);
      if (s.phase2_n() >= cfg.max_n) {
        const std::uint64_t seed = decision_seed(id, b.next_sequence());
        const auto sel = select_arm(s.arms, cfg, seed, pooled);
        json rec{{"candidates", sel.candidates}, {"xi", sel.xi}, {"seed", seed}};
        rec["arm"] = sel.recommended ? json(*sel.recommended) : json();
        rec["dose"] = sel.recommended ? json(*s.arm_doses[arm_index(s, *sel.recommended).value()] + 1)
                                      : json();
        b.emit(EventKind::Recommended, rec);
        return json{{"recommendation", rec}, {"allocation", json()}};
      }
      const std::uint64_t seed = decision_seed(id, b.next_sequence());
      std::vector<double> xi;
      if (s.arms.size() == 1) {
        xi = {1.0};
      } else {
        std::vector<BetaParams> post;
        for (std::size_t r = 0; r < s.arms.size(); ++r) {
          post.push_back(utility_posterior(s.arms[r], cfg, cfg.include_phase1_data ? pooled[r] : std::nullopt));
        }
        xi = bar_probabilities(post, static_cast<std::size_t>(cfg.bar_draws), derive_seed(seed, 0));
      }
      const int size = std::min(cfg.cohort_size, cfg.max_n - s.phase2_n());
      const auto alloc = randomize_cohort(xi, size, derive_seed(seed, 1));
      b.emit(EventKind::Randomized, {{"xi", xi}, {"allocation", alloc}, {"seed", seed}});
      return json{{"xi", xi}, {"allocation", alloc}};
    });
  }

  json get_trial(const std::string& id) {
    auto& entry = find(id);
    std::lock_guard lock(entry.mutex);
    return to_json(load(entry, id));
  }

  json get_posterior(const std::string& id) {
    auto& entry = find(id);
    std::lock_guard lock(entry.mutex);
    const auto& s = load(entry, id);
    if (s.posterior.is_null()) throw not_found("no posterior has been computed for trial " + id);
    json out = s.posterior;
    out["doses"] = std::vector<double>(s.data.grid.amounts().begin(), s.data.grid.amounts().end());
    return out;
  }

  // State rebuilt from the file alone, bypassing the cache.
  TrialState replay_from_disk(const std::string& id) const {
    if (!log_.exists(id)) throw not_found("unknown trial " + id);
    return replay(log_.read(id));
  }

  std::vector<TrialEvent> events(const std::string& id) const {
    if (!log_.exists(id)) throw not_found("unknown trial " + id);
    return log_.read(id);
  }

 private:
  struct Entry {
    std::mutex mutex;
    std::optional<TrialState> state;
  };

  struct Builder {
    Builder(std::string id, TrialState s, const Clock& clock)
        : trial_id(std::move(id)), state(std::move(s)), clock(clock) {}
    std::uint64_t next_sequence() const { return state.last_sequence + 1; }
    void emit(EventKind kind, json payload) {
      TrialEvent e{trial_id, next_sequence(), clock(), kind, std::move(payload)};
      apply(state, e);
      events.push_back(std::move(e));
    }
    std::string trial_id;
    TrialState state;
    const Clock& clock;
    std::vector<TrialEvent> events;
  };

  // caller holds registry_mutex_
  bool taken(const std::string& id) const { return entries_.count(id) > 0 || log_.exists(id); }

  static std::optional<std::size_t> arm_index(const TrialState& s, int arm_id) {
    for (std::size_t r = 0; r < s.arms.size(); ++r) {
      if (s.arms[r].arm_id == arm_id) return r;
    }
    return std::nullopt;
  }

  static std::vector<std::optional<ArmState>> pooled_phase1(const TrialState& s) {
    std::vector<std::optional<ArmState>> out(s.arms.size());
    for (std::size_t r = 0; r < s.arms.size(); ++r) {
      if (s.arm_doses[r]) out[r] = phase1_arm(s.data, *s.arm_doses[r]);
    }
    return out;
  }

  static PatientRecord parse_patient(const json& j, const std::string& where, std::size_t assigned,
                                     std::size_t grid_size) {
    if (!j.is_object()) throw invalid(where + " must be an object");
    for (const auto& [key, _] : j.items()) {
      if (key != "dose" && key != "times" && key != "concentrations" && key != "log_concentrations" &&
          key != "dlt" && key != "efficacy") {
        throw invalid(where + "." + key + " is not a patient field");
      }
    }
    PatientRecord p;
    p.dose_index = assigned;
    if (j.contains("dose")) {
      const auto& d = j.at("dose");
      if (!d.is_number_integer() || d.get<long>() < 1 || d.get<long>() > static_cast<long>(grid_size)) {
        throw invalid(where + ".dose must be a 1-based dose level");
      }
      p.dose_index = d.get<std::size_t>() - 1;
    }
    p.times = detail::numbers(detail::field(j, "times", where), where + ".times");
    if (j.contains("log_concentrations") == j.contains("concentrations")) {
      throw invalid(where + " needs exactly one of concentrations, log_concentrations");
    }
    if (j.contains("log_concentrations")) {
      p.log_concentrations = detail::numbers(j.at("log_concentrations"), where + ".log_concentrations");
    } else {
      for (double c : detail::numbers(j.at("concentrations"), where + ".concentrations")) {
        if (!(c > 0.0)) throw invalid(where + ".concentrations must be > 0");
        p.log_concentrations.push_back(std::log(c));
      }
    }
    p.dlt = detail::binary(detail::field(j, "dlt", where), where + ".dlt");
    if (j.contains("efficacy") && !j.at("efficacy").is_null()) {
      p.efficacy = detail::binary(j.at("efficacy"), where + ".efficacy");
    }
    return p;
  }

  Entry& find(const std::string& id) {
    std::lock_guard registry(registry_mutex_);
    auto it = entries_.find(id);
    if (it != entries_.end()) return *it->second;
    if (!log_.exists(id)) throw not_found("unknown trial " + id);
    auto& e = entries_[id];
    e = std::make_unique<Entry>();
    return *e;
  }

  const TrialState& load(Entry& entry, const std::string& id) {
    if (!entry.state) entry.state = replay(log_.read(id));
    return *entry.state;
  }

  void commit(Entry& entry, Builder& b) {
    log_.append(b.events);
    entry.state = b.state;
  }

  template <class F>
  json mutate(const std::string& id, F&& f) {
    auto& entry = find(id);
    std::lock_guard lock(entry.mutex);
    Builder b(id, load(entry, id), clock_);
    json out;
    try {
      out = f(b);
    } catch (const ServiceError&) {
      throw;
    } catch (const ConfigError& e) {
      throw invalid(e.what());
    }
    commit(entry, b);
    out["state"] = to_json(b.state);
    return out;
  }

  EventLog log_;
  Clock clock_;
  std::mutex registry_mutex_;
  std::map<std::string, std::unique_ptr<Entry>> entries_;
};

}  // namespace pedoop::service
