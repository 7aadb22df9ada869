// pedoop: batch simulation, numerical self-checks and the trial-conduct service.

#include "pedoop/config.hpp"
#include "pedoop/report.hpp"
#include "pedoop/service/http.hpp"
#include "pedoop/validation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

int run_simulate(const std::string& config_path, const std::string& out_dir) {
  pedoop::RunConfig rc;
  try {
    rc = pedoop::load_run_config(config_path);
  } catch (const pedoop::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return 2;
  }
  fs::create_directories(out_dir);
  const std::string normalized = pedoop::serialize_run_config(rc);

  json manifest;
  manifest["config_path"] = config_path;
  manifest["config_hash"] = hex64(pedoop::hash_string(normalized));
  manifest["master_seed"] = rc.replication.master_seed;
  manifest["n_reps"] = rc.replication.n_reps;
  manifest["parallelism"] = rc.replication.parallelism;
  manifest["model"] = pedoop::to_string(rc.design.model);
  manifest["started_at"] = pedoop::service::utc_timestamp();
  json scenarios = json::array();

  for (const auto& sc : rc.scenarios) {
    std::cerr << "scenario " << sc.label << ": " << rc.replication.n_reps << " replicates\n";
    const auto t0 = std::chrono::steady_clock::now();
    std::ofstream trials;
    if (rc.output.write_events) trials.open(fs::path(out_dir) / (sc.label + ".trials.jsonl"));
    pedoop::TrialObserver observer;
    if (rc.output.write_events) {
      observer = [&](int rep, const pedoop::TrialOutcome& t) {
        trials << pedoop::trial_summary_json(rep, t).dump() << "\n";
      };
    }
    pedoop::OperatingCharacteristics oc;
    try {
      oc = pedoop::run_replications(sc, rc.design, rc.replication.n_reps, rc.replication.parallelism,
                                    rc.replication.master_seed, observer);
    } catch (const std::exception& e) {
      std::cerr << "scenario " << sc.label << " failed: " << e.what() << "\n";
      return 1;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto csv_name = sc.label + ".csv";
    std::ofstream csv(fs::path(out_dir) / csv_name);
    pedoop::write_oc_csv(csv, sc, oc, rc.design, rc.output.precision);
    if (!csv) {
      std::cerr << "cannot write " << (fs::path(out_dir) / csv_name) << "\n";
      return 1;
    }
    json entry{{"label", sc.label}, {"csv", csv_name}, {"elapsed_seconds", secs},
               {"operating_characteristics", pedoop::oc_to_json(oc)}};
    if (rc.output.write_events) entry["trials"] = sc.label + ".trials.jsonl";
    scenarios.push_back(entry);
    for (const auto& f : oc.failures) std::cerr << "  " << f << "\n";
  }
  manifest["scenarios"] = scenarios;
  manifest["finished_at"] = pedoop::service::utc_timestamp();
  manifest["config"] = normalized;
  std::ofstream(fs::path(out_dir) / "manifest.json") << manifest.dump(2) << "\n";
  return 0;
}

int run_validate() {
  const auto results = pedoop::run_validation();
  pedoop::print_report(std::cout, results);
  const bool ok = pedoop::all_passed(results);
  std::cout << (ok ? "all checks passed" : "validation FAILED") << "\n";
  return ok ? 0 : 1;
}

int run_serve(const std::string& data_dir, const std::string& host, int port) {
  pedoop::service::TrialService svc(data_dir);
  httplib::Server server;
  pedoop::service::register_routes(server, svc);
  std::cerr << "serving trials from " << data_dir << " on " << host << ":" << port << "\n";
  if (!server.listen(host, port)) {
    std::cerr << "cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seamless phase I/II dose optimization: simulation, validation and trial service"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* sim = app.add_subcommand("simulate", "Run replicated trial simulations from a config file");
  sim->add_option("--config", config_path, "YAML or JSON run configuration")->required();
  sim->add_option("--out", out_dir, "Output directory for CSV tables and manifest")->required();

  auto* val = app.add_subcommand("validate", "Run the numerical self-checks");

  std::string data_dir, host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the trial-conduct HTTP service");
  serve->add_option("--data-dir", data_dir, "Directory for trial event logs")->required();
  serve->add_option("--port", port, "TCP port")->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "Bind address");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return run_simulate(config_path, out_dir);
    if (*val) return run_validate();
    if (*serve) return run_serve(data_dir, host, port);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
