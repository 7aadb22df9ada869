#pragma once

// Run configuration: YAML (or JSON, which yaml-cpp also reads) in, YAML out.
// Every section rejects unknown keys and reports the line of the problem.

#include "pedoop/scenarios.hpp"
#include "pedoop/simulation.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pedoop {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReplicationSettings {
  int n_reps = 1000;
  std::uint64_t master_seed = 0;
  int parallelism = 1;
  bool operator==(const ReplicationSettings&) const = default;
};

struct OutputSettings {
  bool write_events = false;  // per-replicate trial summaries (JSON lines)
  int precision = 6;
  bool operator==(const OutputSettings&) const = default;
};

struct RunConfig {
  std::vector<Scenario> scenarios;
  TrialDesign design;
  ReplicationSettings replication;
  OutputSettings output;
  bool operator==(const RunConfig&) const = default;
};

namespace cfg {

inline std::string where(const YAML::Node& n) {
  const auto m = n.Mark();
  if (m.line < 0) return "";
  return " (line " + std::to_string(m.line + 1) + ")";
}

// One mapping node; keys are checked off as they are read.
class Section {
 public:
  Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      throw ConfigError(label() + " must be a mapping" + where(node_));
    }
  }

  bool has(const std::string& key) const { return node_ && node_[key]; }

  template <class T>
  void optional(const std::string& key, T& out) {
    if (!has(key)) return;
    seen_.insert(key);
    out = convert<T>(node_[key], qualified(key));
  }

  template <class T>
  void required(const std::string& key, T& out) {
    if (!has(key)) throw ConfigError(qualified(key) + " is required" + where(node_));
    optional(key, out);
  }

  Section child(const std::string& key) {
    if (!has(key)) return Section(YAML::Node(), qualified(key));
    seen_.insert(key);
    return Section(node_[key], qualified(key));
  }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return node_[key];
  }

  void finish() const {
    if (!node_) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) {
        throw ConfigError("unknown key '" + qualified(key) + "'" + where(kv.first));
      }
    }
  }

  const std::string& path() const { return path_; }
  const YAML::Node& node() const { return node_; }

 private:
  std::string label() const { return path_.empty() ? "document" : "'" + path_ + "'"; }
  std::string qualified(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  template <class T>
  static T convert(const YAML::Node& n, const std::string& name) {
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("'" + name + "' has the wrong type" + where(n));
    }
  }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
auto checked(const YAML::Node& n, const std::string& what, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(what + ": " + e.what() + where(n));
  }
}

inline void read_gamma(Section& parent, const std::string& key, GammaPrior& g) {
  auto s = parent.child(key);
  s.optional("shape", g.shape);
  s.optional("rate", g.rate);
  s.finish();
}

inline void read_normal(Section& parent, const std::string& key, NormalPrior& p) {
  auto s = parent.child(key);
  s.optional("mean", p.mean);
  s.optional("variance", p.variance);
  s.finish();
}

inline void read_lognormal(Section& parent, const std::string& key, LogNormalPrior& p) {
  auto s = parent.child(key);
  s.optional("log_mean", p.log_mean);
  s.optional("log_variance", p.log_variance);
  s.finish();
}

inline DoseModel parse_model(const std::string& s, const YAML::Node& n) {
  if (s == "pedoop") return DoseModel::Pedoop;
  if (s == "logit_emax") return DoseModel::LogitEmax;
  throw ConfigError("design.model must be 'pedoop' or 'logit_emax'" + where(n));
}

}  // namespace cfg

// Reads the design sections (design, phase1, phase2, mcmc, prior,
// comparator_prior) from `root`, marking them as seen.
inline TrialDesign read_design(cfg::Section& root) {
  TrialDesign d;
  {
    auto s = root.child("design");
    if (s.has("preset")) {
      std::string preset;
      s.optional("preset", preset);
      if (preset == "phase1_only") {
        d = phase1_only_design();
      } else if (preset == "seamless") {
        d = seamless_design();
      } else {
        throw ConfigError("design.preset must be 'phase1_only' or 'seamless'" +
                          cfg::where(s.node()["preset"]));
      }
    }
    std::string model = to_string(d.model);
    s.optional("model", model);
    if (s.has("model")) d.model = cfg::parse_model(model, s.node()["model"]);
    s.optional("run_phase2", d.run_phase2);
    s.optional("include_control", d.include_control);
    s.finish();
  }
  {
    auto s = root.child("phase1");
    auto& p = d.phase1;
    s.optional("target_tox", p.target_tox);
    if (s.has("safety_threshold")) {
      double v = 0;
      s.optional("safety_threshold", v);
      p.safety_threshold = v;
    }
    s.optional("safety_cutoff", p.safety_cutoff);
    s.optional("grad_tox_threshold", p.grad_tox_threshold);
    s.optional("grad_eff_threshold", p.grad_eff_threshold);
    s.optional("grad_tox_prob", p.grad_tox_prob);
    s.optional("grad_eff_prob", p.grad_eff_prob);
    s.optional("cohort_size", p.cohort_size);
    s.optional("max_n", p.max_n);
    if (s.has("start_dose")) {
      int one_based = 1;
      s.optional("start_dose", one_based);
      if (one_based < 1) throw ConfigError("phase1.start_dose is 1-based and must be >= 1");
      p.start_dose = static_cast<std::size_t>(one_based - 1);
    }
    s.finish();
  }
  {
    auto s = root.child("phase2");
    auto& p = d.phase2;
    s.optional("cohort_size", p.cohort_size);
    s.optional("max_n", p.max_n);
    s.optional("prior_alpha", p.prior_alpha);
    s.optional("prior_beta", p.prior_beta);
    s.optional("tox_threshold", p.tox_threshold);
    s.optional("eff_threshold", p.eff_threshold);
    s.optional("sel_tox_prob", p.sel_tox_prob);
    s.optional("sel_eff_prob", p.sel_eff_prob);
    s.optional("include_phase1_data", p.include_phase1_data);
    s.optional("bar_draws", p.bar_draws);
    auto w = s.child("weights");
    w.optional("eff_no_tox", p.weights.s1);
    w.optional("eff_tox", p.weights.s2);
    w.optional("no_eff_no_tox", p.weights.s3);
    w.optional("no_eff_tox", p.weights.s4);
    w.finish();
    s.finish();
  }
  {
    auto s = root.child("mcmc");
    if (s.has("preset")) {
      std::string preset;
      s.optional("preset", preset);
      if (preset == "desk") {
        d.mcmc = desk_mcmc();
      } else if (preset != "default") {
        throw ConfigError("mcmc.preset must be 'default' or 'desk'" + cfg::where(s.node()["preset"]));
      }
    }
    s.optional("iterations", d.mcmc.iterations);
    s.optional("burn_in", d.mcmc.burn_in);
    s.optional("thin", d.mcmc.thin);
    s.optional("target_acceptance", d.mcmc.target_acceptance);
    s.finish();
  }
  {
    auto s = root.child("prior");
    auto& p = d.prior;
    cfg::read_gamma(s, "alpha_v_minus_1", p.alpha_v_minus_1);
    cfg::read_gamma(s, "lambda_v", p.lambda_v);
    cfg::read_gamma(s, "alpha_k_minus_1", p.alpha_k_minus_1);
    cfg::read_gamma(s, "lambda_k", p.lambda_k);
    cfg::read_gamma(s, "sigma", p.sigma);
    cfg::read_normal(s, "beta0", p.beta0);
    cfg::read_lognormal(s, "beta1", p.beta1);
    cfg::read_lognormal(s, "e_max", p.e_max);
    cfg::read_gamma(s, "ed50", p.ed50);
    s.optional("free_gamma", p.free_gamma);
    cfg::read_gamma(s, "gamma", p.gamma);
    s.finish();
  }
  {
    auto s = root.child("comparator_prior");
    auto& p = d.comparator_prior;
    cfg::read_normal(s, "beta0", p.beta0);
    cfg::read_lognormal(s, "beta1", p.beta1);
    cfg::read_lognormal(s, "e_max", p.e_max);
    cfg::read_gamma(s, "ed50", p.ed50);
    cfg::read_gamma(s, "gamma", p.gamma);
    s.finish();
  }
  return d;
}

inline Scenario read_scenario(const YAML::Node& node, const std::string& path) {
  cfg::Section s(node, path);
  Scenario sc;
  if (s.has("preset")) {
    std::string preset;
    s.optional("preset", preset);
    sc = cfg::checked(node["preset"], path + ".preset", [&] { return find_published(preset).scenario; });
  }
  s.optional("label", sc.label);
  if (s.has("doses")) {
    std::vector<double> doses;
    s.optional("doses", doses);
    sc.grid = cfg::checked(node["doses"], path + ".doses", [&] { return DoseGrid(doses); });
  }
  s.optional("true_tox", sc.true_tox);
  s.optional("true_eff", sc.true_eff);
  s.optional("sample_times", sc.sample_times);
  s.optional("control_tox", sc.control_tox);
  s.optional("control_eff", sc.control_eff);
  auto pk = s.child("pk");
  pk.optional("v_shape", sc.pk.v_shape);
  pk.optional("v_rate", sc.pk.v_rate);
  pk.optional("k_shape", sc.pk.k_shape);
  pk.optional("k_rate", sc.pk.k_rate);
  pk.optional("sigma", sc.pk.sigma);
  pk.finish();
  s.finish();
  if (sc.label.empty()) throw ConfigError(path + ".label is required" + cfg::where(node));
  cfg::checked(node, path, [&] {
    sc.validate();
    return 0;
  });
  return sc;
}

inline RunConfig parse_run_config(const YAML::Node& doc) {
  if (!doc || !doc.IsMap()) throw ConfigError("configuration must be a mapping at the top level");
  cfg::Section root(doc, "");
  RunConfig rc;

  const auto list = root.raw("scenarios");
  if (!list || !list.IsSequence() || list.size() == 0) {
    throw ConfigError("'scenarios' must be a non-empty list" + cfg::where(list ? list : doc));
  }
  for (std::size_t i = 0; i < list.size(); ++i) {
    rc.scenarios.push_back(read_scenario(list[i], "scenarios[" + std::to_string(i) + "]"));
  }

  rc.design = read_design(root);

  {
    if (!root.has("replication")) throw ConfigError("replication.master_seed is required");
    auto s = root.child("replication");
    s.optional("n_reps", rc.replication.n_reps);
    s.required("master_seed", rc.replication.master_seed);
    s.optional("parallelism", rc.replication.parallelism);
    s.finish();
    if (rc.replication.n_reps < 1) throw ConfigError("replication.n_reps must be >= 1");
    if (rc.replication.parallelism < 1) throw ConfigError("replication.parallelism must be >= 1");
  }
  {
    auto s = root.child("output");
    s.optional("write_events", rc.output.write_events);
    s.optional("precision", rc.output.precision);
    s.finish();
  }
  root.finish();

  for (const auto& sc : rc.scenarios) {
    cfg::checked(doc, "scenario " + sc.label, [&] {
      rc.design.validate(sc.grid.size());
      return 0;
    });
  }
  return rc;
}

inline RunConfig parse_run_config_text(const std::string& text) {
  YAML::Node doc;
  try {
    doc = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("parse error at line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  return parse_run_config(doc);
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

namespace cfg {

// Shortest decimal that reads back to the same double.
inline std::string num(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline void emit_seq(YAML::Emitter& out, std::span<const double> v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (double x : v) out << num(x);
  out << YAML::EndSeq;
}

inline void emit_gamma(YAML::Emitter& out, const char* key, const GammaPrior& g) {
  out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginMap;
  out << YAML::Key << "shape" << YAML::Value << num(g.shape);
  out << YAML::Key << "rate" << YAML::Value << num(g.rate) << YAML::EndMap;
}

inline void emit_normal(YAML::Emitter& out, const char* key, const NormalPrior& p) {
  out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginMap;
  out << YAML::Key << "mean" << YAML::Value << num(p.mean);
  out << YAML::Key << "variance" << YAML::Value << num(p.variance) << YAML::EndMap;
}

inline void emit_lognormal(YAML::Emitter& out, const char* key, const LogNormalPrior& p) {
  out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginMap;
  out << YAML::Key << "log_mean" << YAML::Value << num(p.log_mean);
  out << YAML::Key << "log_variance" << YAML::Value << num(p.log_variance) << YAML::EndMap;
}

}  // namespace cfg

inline void emit_design(YAML::Emitter& out, const TrialDesign& d) {
  out << YAML::Key << "design" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "model" << YAML::Value << to_string(d.model);
  out << YAML::Key << "run_phase2" << YAML::Value << d.run_phase2;
  out << YAML::Key << "include_control" << YAML::Value << d.include_control;
  out << YAML::EndMap;

  const auto& p1 = d.phase1;
  out << YAML::Key << "phase1" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "target_tox" << YAML::Value << cfg::num(p1.target_tox);
  if (p1.safety_threshold) out << YAML::Key << "safety_threshold" << YAML::Value << cfg::num(*p1.safety_threshold);
  out << YAML::Key << "safety_cutoff" << YAML::Value << cfg::num(p1.safety_cutoff);
  out << YAML::Key << "grad_tox_threshold" << YAML::Value << cfg::num(p1.grad_tox_threshold);
  out << YAML::Key << "grad_eff_threshold" << YAML::Value << cfg::num(p1.grad_eff_threshold);
  out << YAML::Key << "grad_tox_prob" << YAML::Value << cfg::num(p1.grad_tox_prob);
  out << YAML::Key << "grad_eff_prob" << YAML::Value << cfg::num(p1.grad_eff_prob);
  out << YAML::Key << "cohort_size" << YAML::Value << p1.cohort_size;
  out << YAML::Key << "max_n" << YAML::Value << p1.max_n;
  out << YAML::Key << "start_dose" << YAML::Value << p1.start_dose + 1;
  out << YAML::EndMap;

  const auto& p2 = d.phase2;
  out << YAML::Key << "phase2" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "cohort_size" << YAML::Value << p2.cohort_size;
  out << YAML::Key << "max_n" << YAML::Value << p2.max_n;
  out << YAML::Key << "prior_alpha" << YAML::Value << cfg::num(p2.prior_alpha);
  out << YAML::Key << "prior_beta" << YAML::Value << cfg::num(p2.prior_beta);
  out << YAML::Key << "tox_threshold" << YAML::Value << cfg::num(p2.tox_threshold);
  out << YAML::Key << "eff_threshold" << YAML::Value << cfg::num(p2.eff_threshold);
  out << YAML::Key << "sel_tox_prob" << YAML::Value << cfg::num(p2.sel_tox_prob);
  out << YAML::Key << "sel_eff_prob" << YAML::Value << cfg::num(p2.sel_eff_prob);
  out << YAML::Key << "include_phase1_data" << YAML::Value << p2.include_phase1_data;
  out << YAML::Key << "bar_draws" << YAML::Value << p2.bar_draws;
  out << YAML::Key << "weights" << YAML::Value << YAML::Flow << YAML::BeginMap;
  out << YAML::Key << "eff_no_tox" << YAML::Value << cfg::num(p2.weights.s1);
  out << YAML::Key << "eff_tox" << YAML::Value << cfg::num(p2.weights.s2);
  out << YAML::Key << "no_eff_no_tox" << YAML::Value << cfg::num(p2.weights.s3);
  out << YAML::Key << "no_eff_tox" << YAML::Value << cfg::num(p2.weights.s4);
  out << YAML::EndMap << YAML::EndMap;

  out << YAML::Key << "mcmc" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "iterations" << YAML::Value << d.mcmc.iterations;
  out << YAML::Key << "burn_in" << YAML::Value << d.mcmc.burn_in;
  out << YAML::Key << "thin" << YAML::Value << d.mcmc.thin;
  out << YAML::Key << "target_acceptance" << YAML::Value << cfg::num(d.mcmc.target_acceptance);
  out << YAML::EndMap;

  const auto& pr = d.prior;
  out << YAML::Key << "prior" << YAML::Value << YAML::BeginMap;
  cfg::emit_gamma(out, "alpha_v_minus_1", pr.alpha_v_minus_1);
  cfg::emit_gamma(out, "lambda_v", pr.lambda_v);
  cfg::emit_gamma(out, "alpha_k_minus_1", pr.alpha_k_minus_1);
  cfg::emit_gamma(out, "lambda_k", pr.lambda_k);
  cfg::emit_gamma(out, "sigma", pr.sigma);
  cfg::emit_normal(out, "beta0", pr.beta0);
  cfg::emit_lognormal(out, "beta1", pr.beta1);
  cfg::emit_lognormal(out, "e_max", pr.e_max);
  cfg::emit_gamma(out, "ed50", pr.ed50);
  out << YAML::Key << "free_gamma" << YAML::Value << pr.free_gamma;
  cfg::emit_gamma(out, "gamma", pr.gamma);
  out << YAML::EndMap;

  const auto& cp = d.comparator_prior;
  out << YAML::Key << "comparator_prior" << YAML::Value << YAML::BeginMap;
  cfg::emit_normal(out, "beta0", cp.beta0);
  cfg::emit_lognormal(out, "beta1", cp.beta1);
  cfg::emit_lognormal(out, "e_max", cp.e_max);
  cfg::emit_gamma(out, "ed50", cp.ed50);
  cfg::emit_gamma(out, "gamma", cp.gamma);
  out << YAML::EndMap;
}

inline std::string serialize_run_config(const RunConfig& rc) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "scenarios" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : rc.scenarios) {
    out << YAML::BeginMap;
    out << YAML::Key << "label" << YAML::Value << s.label;
    out << YAML::Key << "doses" << YAML::Value;
    cfg::emit_seq(out, s.grid.amounts());
    out << YAML::Key << "true_tox" << YAML::Value;
    cfg::emit_seq(out, s.true_tox);
    out << YAML::Key << "true_eff" << YAML::Value;
    cfg::emit_seq(out, s.true_eff);
    out << YAML::Key << "sample_times" << YAML::Value;
    cfg::emit_seq(out, s.sample_times);
    out << YAML::Key << "control_tox" << YAML::Value << cfg::num(s.control_tox);
    out << YAML::Key << "control_eff" << YAML::Value << cfg::num(s.control_eff);
    out << YAML::Key << "pk" << YAML::Value << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "v_shape" << YAML::Value << cfg::num(s.pk.v_shape);
    out << YAML::Key << "v_rate" << YAML::Value << cfg::num(s.pk.v_rate);
    out << YAML::Key << "k_shape" << YAML::Value << cfg::num(s.pk.k_shape);
    out << YAML::Key << "k_rate" << YAML::Value << cfg::num(s.pk.k_rate);
    out << YAML::Key << "sigma" << YAML::Value << cfg::num(s.pk.sigma);
    out << YAML::EndMap << YAML::EndMap;
  }
  out << YAML::EndSeq;
  emit_design(out, rc.design);
  out << YAML::Key << "replication" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "n_reps" << YAML::Value << rc.replication.n_reps;
  out << YAML::Key << "master_seed" << YAML::Value << rc.replication.master_seed;
  out << YAML::Key << "parallelism" << YAML::Value << rc.replication.parallelism;
  out << YAML::EndMap;
  out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "write_events" << YAML::Value << rc.output.write_events;
  out << YAML::Key << "precision" << YAML::Value << rc.output.precision;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace pedoop
