#pragma once

// Append-only trial event log, one JSON object per line.

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pedoop::service {

enum class EventKind {
  Created,
  CohortAssigned,
  OutcomesRecorded,
  PosteriorComputed,
  Graduated,
  Randomized,
  Recommended,
  Terminated,
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Created: return "created";
    case EventKind::CohortAssigned: return "cohortAssigned";
    case EventKind::OutcomesRecorded: return "outcomesRecorded";
    case EventKind::PosteriorComputed: return "posteriorComputed";
    case EventKind::Graduated: return "graduated";
    case EventKind::Randomized: return "randomized";
    case EventKind::Recommended: return "recommended";
    case EventKind::Terminated: return "terminated";
  }
  return "?";
}

inline EventKind parse_event_kind(const std::string& s) {
  for (auto k : {EventKind::Created, EventKind::CohortAssigned, EventKind::OutcomesRecorded,
                 EventKind::PosteriorComputed, EventKind::Graduated, EventKind::Randomized,
                 EventKind::Recommended, EventKind::Terminated}) {
    if (s == to_string(k)) return k;
  }
  throw std::runtime_error("unknown event kind '" + s + "'");
}

struct TrialEvent {
  std::string trial_id;
  std::uint64_t sequence = 0;
  std::string timestamp;
  EventKind kind = EventKind::Created;
  nlohmann::json payload = nlohmann::json::object();
};

inline nlohmann::json to_json(const TrialEvent& e) {
  return {{"trialId", e.trial_id},
          {"sequence", e.sequence},
          {"timestamp", e.timestamp},
          {"kind", to_string(e.kind)},
          {"payload", e.payload}};
}

inline TrialEvent event_from_json(const nlohmann::json& j) {
  TrialEvent e;
  e.trial_id = j.at("trialId").get<std::string>();
  e.sequence = j.at("sequence").get<std::uint64_t>();
  e.timestamp = j.at("timestamp").get<std::string>();
  e.kind = parse_event_kind(j.at("kind").get<std::string>());
  e.payload = j.at("payload");
  return e;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

class EventLog {
 public:
  explicit EventLog(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::filesystem::path path_for(const std::string& trial_id) const {
    return dir_ / (trial_id + ".ndjson");
  }

  bool exists(const std::string& trial_id) const {
    return std::filesystem::exists(path_for(trial_id));
  }

  std::vector<TrialEvent> read(const std::string& trial_id) const {
    std::ifstream in(path_for(trial_id));
    if (!in) throw std::runtime_error("no event log for trial " + trial_id);
    std::vector<TrialEvent> out;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      out.push_back(event_from_json(nlohmann::json::parse(line)));
    }
    return out;
  }

  void append(const std::vector<TrialEvent>& events) const {
    if (events.empty()) return;
    std::ofstream out(path_for(events.front().trial_id), std::ios::app);
    if (!out) throw std::runtime_error("cannot write event log for " + events.front().trial_id);
    for (const auto& e : events) out << to_json(e).dump() << "\n";
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + events.front().trial_id);
  }

  std::vector<std::string> trial_ids() const {
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      if (entry.path().extension() == ".ndjson") ids.push_back(entry.path().stem().string());
    }
    return ids;
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

}  // namespace pedoop::service
