#pragma once

#include "pedoop/pkpd.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pedoop {

// One phase I subject. `efficacy` is empty while the response is pending.
struct PatientRecord {
  std::size_t dose_index = 0;
  std::vector<double> times;              // hours after administration
  std::vector<double> log_concentrations; // aligned with times; may be empty
  int dlt = 0;
  std::optional<int> efficacy;

  bool operator==(const PatientRecord&) const = default;
};

struct DoseCounts {
  std::vector<int> n;      // enrolled
  std::vector<int> y;      // DLTs
  std::vector<int> n_eff;  // enrolled with an observed efficacy outcome
  std::vector<int> z;      // responses
};

struct Phase1Data {
  DoseGrid grid;
  std::vector<PatientRecord> patients;

  Phase1Data() = default;
  explicit Phase1Data(DoseGrid g) : grid(std::move(g)) {}

  double dose_amount(const PatientRecord& p) const { return grid.amount(p.dose_index); }

  void validate() const {
    for (std::size_t i = 0; i < patients.size(); ++i) {
      const auto& p = patients[i];
      const std::string who = "patient " + std::to_string(i);
      if (p.dose_index >= grid.size()) throw std::invalid_argument(who + ": dose index outside grid");
      if (p.times.size() != p.log_concentrations.size()) {
        throw std::invalid_argument(who + ": times and concentrations differ in length");
      }
      for (std::size_t j = 0; j < p.times.size(); ++j) {
        if (!std::isfinite(p.times[j]) || p.times[j] < 0.0) {
          throw std::invalid_argument(who + ": sample times must be finite and >= 0");
        }
        if (j > 0 && !(p.times[j] > p.times[j - 1])) {
          throw std::invalid_argument(who + ": sample times must be strictly increasing");
        }
        if (!std::isfinite(p.log_concentrations[j])) {
          throw std::invalid_argument(who + ": log concentrations must be finite");
        }
      }
      if (p.dlt != 0 && p.dlt != 1) throw std::invalid_argument(who + ": dlt must be 0 or 1");
      if (p.efficacy && *p.efficacy != 0 && *p.efficacy != 1) {
        throw std::invalid_argument(who + ": efficacy must be 0, 1 or pending");
      }
    }
  }

  DoseCounts counts() const {
    const std::size_t d = grid.size();
    DoseCounts c{std::vector<int>(d, 0), std::vector<int>(d, 0), std::vector<int>(d, 0),
                 std::vector<int>(d, 0)};
    for (const auto& p : patients) {
      c.n[p.dose_index] += 1;
      c.y[p.dose_index] += p.dlt;
      if (p.efficacy) {
        c.n_eff[p.dose_index] += 1;
        c.z[p.dose_index] += *p.efficacy;
      }
    }
    return c;
  }

  std::size_t observation_count() const {
    std::size_t n = 0;
    for (const auto& p : patients) n += p.times.size();
    return n;
  }
};

}  // namespace pedoop
