#pragma once

// Joint posterior of the PK/toxicity/efficacy model and a component-wise
// adaptive random-walk Metropolis sampler for it.

#include "pedoop/data.hpp"
#include "pedoop/distributions.hpp"
#include "pedoop/pkpd.hpp"
#include "pedoop/random.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pedoop {

struct GammaPrior {
  double shape = 1.0;
  double rate = 1.0;
  double mean() const { return shape / rate; }
  double variance() const { return shape / (rate * rate); }
  bool operator==(const GammaPrior&) const = default;
};

struct NormalPrior {
  double mean = 0.0;
  double variance = 1.0;
  bool operator==(const NormalPrior&) const = default;
};

// log X ~ N(log_mean, log_variance)
struct LogNormalPrior {
  double log_mean = 0.0;
  double log_variance = 1.0;
  double mean() const { return std::exp(log_mean + 0.5 * log_variance); }
  double variance() const {
    return std::expm1(log_variance) * std::exp(2.0 * log_mean + log_variance);
  }
  bool operator==(const LogNormalPrior&) const = default;
};

struct PriorSpec {
  GammaPrior alpha_v_minus_1{4.0, 1.0};
  GammaPrior lambda_v{1.0, 1.0};
  GammaPrior alpha_k_minus_1{3.0, 1.0};
  GammaPrior lambda_k{1.0, 1.0};
  GammaPrior sigma{3.0, 3.0};
  NormalPrior beta0{-3.0, 10.0};
  LogNormalPrior beta1{0.0, 1.0};
  LogNormalPrior e_max{-1.0, 0.5};
  GammaPrior ed50{20.0, 0.5};
  // Hill coefficient. Tied to 2 / alpha_k unless free_gamma is set.
  bool free_gamma = false;
  GammaPrior gamma{0.1, 0.1};

  void validate() const {
    auto pos = [](double x) { return std::isfinite(x) && x > 0.0; };
    for (const GammaPrior* g : {&alpha_v_minus_1, &lambda_v, &alpha_k_minus_1, &lambda_k, &sigma,
                                &ed50, &gamma}) {
      if (!pos(g->shape) || !pos(g->rate)) {
        throw std::invalid_argument("PriorSpec: gamma shape and rate must be > 0");
      }
    }
    if (!pos(beta0.variance) || !pos(beta1.log_variance) || !pos(e_max.log_variance)) {
      throw std::invalid_argument("PriorSpec: variances must be > 0");
    }
  }
  bool operator==(const PriorSpec&) const = default;
};

// Applies the gamma = 2 / alpha_k tie when gamma is not a free parameter.
inline ModelParams effective_params(ModelParams theta, const PriorSpec& prior) {
  if (!prior.free_gamma) theta.pd.gamma = 2.0 / theta.pk.alpha_k;
  return theta;
}

// Parameter vector at the prior means; latents start at their prior means too.
inline ModelParams prior_mean_params(const PriorSpec& prior) {
  ModelParams t;
  t.pk.alpha_v = 1.0 + prior.alpha_v_minus_1.mean();
  t.pk.lambda_v = prior.lambda_v.mean();
  t.pk.alpha_k = 1.0 + prior.alpha_k_minus_1.mean();
  t.pk.lambda_k = prior.lambda_k.mean();
  t.sigma = prior.sigma.mean();
  t.tox.beta0 = prior.beta0.mean;
  t.tox.beta1 = prior.beta1.mean();
  t.pd.e_max = prior.e_max.mean();
  t.pd.ed50 = prior.ed50.mean();
  t.pd.gamma = prior.free_gamma ? std::max(prior.gamma.mean(), 2.0 / t.pk.alpha_k) : 2.0 / t.pk.alpha_k;
  return t;
}

inline double log_prior(const ModelParams& theta, const PriorSpec& prior) {
  double lp = gamma_logpdf(theta.pk.alpha_v - 1.0, prior.alpha_v_minus_1.shape,
                           prior.alpha_v_minus_1.rate) +
              gamma_logpdf(theta.pk.lambda_v, prior.lambda_v.shape, prior.lambda_v.rate) +
              gamma_logpdf(theta.pk.alpha_k - 1.0, prior.alpha_k_minus_1.shape,
                           prior.alpha_k_minus_1.rate) +
              gamma_logpdf(theta.pk.lambda_k, prior.lambda_k.shape, prior.lambda_k.rate) +
              gamma_logpdf(theta.sigma, prior.sigma.shape, prior.sigma.rate) +
              normal_logpdf(theta.tox.beta0, prior.beta0.mean, std::sqrt(prior.beta0.variance)) +
              lognormal_logpdf(theta.tox.beta1, prior.beta1.log_mean, prior.beta1.log_variance) +
              lognormal_logpdf(theta.pd.e_max, prior.e_max.log_mean, prior.e_max.log_variance) +
              gamma_logpdf(theta.pd.ed50, prior.ed50.shape, prior.ed50.rate);
  if (prior.free_gamma) lp += gamma_logpdf(theta.pd.gamma, prior.gamma.shape, prior.gamma.rate);
  return lp;
}

// Binomial toxicity and (optionally) efficacy log-likelihood summed over doses.
inline double dose_outcome_loglik(const ModelParams& theta, const DoseGrid& grid,
                                  const DoseCounts& counts, bool include_efficacy) {
  double ll = 0.0;
  for (std::size_t d = 0; d < grid.size(); ++d) {
    const double dose = grid.amount(d);
    if (counts.n[d] > 0) {
      const double x = theta.tox.beta0 + theta.tox.beta1 * log_auc_population(dose, theta.pk);
      ll += binomial_logpmf(counts.y[d], counts.n[d], -detail::softplus(-x), -detail::softplus(x));
    }
    if (include_efficacy && counts.n_eff[d] > 0) {
      const double eta = cumulative_effect(dose, theta.pk, theta.pd);
      const double log_q = eta > 0.0 ? std::log(-std::expm1(-eta)) : kNegInf;
      ll += binomial_logpmf(counts.z[d], counts.n_eff[d], log_q, -eta);
    }
  }
  return ll;
}

inline double patient_pk_loglik(const PatientRecord& p, double dose, const PatientPk& latent,
                                double sigma) {
  double ll = 0.0;
  const double log_c0 = std::log(dose) - std::log(latent.v);
  for (std::size_t j = 0; j < p.times.size(); ++j) {
    ll += normal_logpdf(p.log_concentrations[j], log_c0 - latent.k * p.times[j], sigma);
  }
  return ll;
}

// Unnormalized log posterior density of (theta, latents) given phase I data.
// Returns -inf outside the parameter support.
inline double log_posterior(const ModelParams& theta_in, std::span<const PatientPk> latents,
                            const Phase1Data& data, const PriorSpec& prior,
                            bool include_efficacy) {
  if (latents.size() != data.patients.size()) {
    throw std::domain_error("log_posterior: one latent (V, k) pair per patient is required");
  }
  const ModelParams theta = effective_params(theta_in, prior);
  if (!theta.valid()) return kNegInf;
  double lp = 0.0;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    const auto& z = latents[i];
    if (!(z.v > 0.0 && z.k > 0.0 && std::isfinite(z.v) && std::isfinite(z.k))) return kNegInf;
    const auto& p = data.patients[i];
    lp += patient_pk_loglik(p, data.dose_amount(p), z, theta.sigma);
    lp += gamma_logpdf(z.v, theta.pk.alpha_v, theta.pk.lambda_v);
    lp += gamma_logpdf(z.k, theta.pk.alpha_k, theta.pk.lambda_k);
  }
  lp += dose_outcome_loglik(theta, data.grid, data.counts(), include_efficacy);
  lp += log_prior(theta, prior);
  return lp;
}

struct McmcSettings {
  int iterations = 10000;
  int burn_in = 5000;
  int thin = 5;
  double target_acceptance = 0.3;

  void validate() const {
    if (iterations < 1 || burn_in < 0 || burn_in >= iterations || thin < 1) {
      throw std::invalid_argument("McmcSettings: need iterations > burn_in >= 0 and thin >= 1");
    }
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) {
      throw std::invalid_argument("McmcSettings: target acceptance must be in (0, 1)");
    }
  }
  int retained() const { return (iterations - burn_in + thin - 1) / thin; }
  bool operator==(const McmcSettings&) const = default;
};

struct BlockStats {
  std::string name;
  long proposed = 0;  // post burn-in
  long accepted = 0;
  double rate() const { return proposed > 0 ? static_cast<double>(accepted) / proposed : 0.0; }
};

struct McmcMeta {
  McmcSettings settings;
  std::uint64_t seed = 0;
  std::vector<BlockStats> blocks;
};

struct PosteriorDraws {
  std::vector<ModelParams> theta;
  std::vector<std::vector<PatientPk>> latents;  // [draw][patient]
  McmcMeta meta;
  bool include_efficacy = false;

  std::size_t size() const { return theta.size(); }
  bool empty() const { return theta.empty(); }
};

namespace detail {

// Random-walk step size with Robbins-Monro adaptation on the log step,
// frozen once burn-in ends.
class AdaptiveStep {
 public:
  explicit AdaptiveStep(double initial = 0.5) : log_step_(std::log(initial)) {}

  double step() const { return std::exp(log_step_); }

  void record(bool accepted, long iteration, bool adapting, double target) {
    if (adapting) {
      const double gain = 1.0 / std::pow(static_cast<double>(iteration) + 10.0, 0.6);
      log_step_ += gain * ((accepted ? 1.0 : 0.0) - target) * 3.0;
      log_step_ = std::clamp(log_step_, -12.0, 4.0);
    }
  }

 private:
  double log_step_;
};

inline bool metropolis_accept(Rng& rng, double log_ratio) {
  if (std::isnan(log_ratio)) return false;
  if (log_ratio >= 0.0) return true;
  return std::log(uniform01(rng)) < log_ratio;
}

}  // namespace detail

// One Markov chain over (theta, V_1..V_n, k_1..k_n). Positive parameters move
// on the log scale, beta0 on its natural scale; latents are updated one
// patient at a time.
class PosteriorSampler {
 public:
  PosteriorSampler(const Phase1Data& data, const PriorSpec& prior, McmcSettings settings,
                   bool include_efficacy, std::uint64_t seed)
      : data_(data),
        prior_(prior),
        settings_(settings),
        include_efficacy_(include_efficacy),
        seed_(seed),
        rng_(make_rng(seed)),
        counts_(data.counts()) {
    prior_.validate();
    settings_.validate();
    data_.validate();
    init_state();
  }

  PosteriorDraws run() {
    PosteriorDraws out;
    out.include_efficacy = include_efficacy_;
    out.meta.settings = settings_;
    out.meta.seed = seed_;
    out.theta.reserve(settings_.retained());
    out.latents.reserve(settings_.retained());
    for (long it = 0; it < settings_.iterations; ++it) {
      const bool adapting = it < settings_.burn_in;
      sweep(it, adapting);
      if (!adapting && (it - settings_.burn_in) % settings_.thin == 0) {
        out.theta.push_back(theta_);
        std::vector<PatientPk> z(n_patients_);
        for (std::size_t i = 0; i < n_patients_; ++i) z[i] = {std::exp(log_v_[i]), k_[i]};
        out.latents.push_back(std::move(z));
      }
    }
    out.meta.blocks = stats_;
    return out;
  }

 private:
  enum Block : std::size_t {
    kAlphaV,
    kLambdaV,
    kAlphaK,
    kLambdaK,
    kSigma,
    kBeta0,
    kBeta1,
    kEmax,
    kEd50,
    kGamma,
    kLatentV,
    kLatentK,
    kBlockCount
  };

  void init_state() {
    n_patients_ = data_.patients.size();
    theta_ = prior_mean_params(prior_);
    steps_.assign(kBlockCount, detail::AdaptiveStep(0.5));
    steps_[kBeta0] = detail::AdaptiveStep(1.0);
    static const std::array<const char*, kBlockCount> names = {
        "alpha_v", "lambda_v", "alpha_k", "lambda_k", "sigma", "beta0",
        "beta1",   "e_max",    "ed50",    "gamma",    "latent_v", "latent_k"};
    for (std::size_t b = 0; b < kBlockCount; ++b) {
      if (b == kGamma && !prior_.free_gamma) continue;
      stats_.push_back({names[b], 0, 0});
      stat_index_[b] = stats_.size() - 1;
    }
    log_v_.resize(n_patients_);
    k_.resize(n_patients_);
    ssr_.resize(n_patients_);
    v_steps_.assign(n_patients_, detail::AdaptiveStep(0.3));
    k_steps_.assign(n_patients_, detail::AdaptiveStep(0.3));
    log_dose_.resize(n_patients_);
    const double v0 = theta_.pk.alpha_v / theta_.pk.lambda_v;
    const double k0 = theta_.pk.alpha_k / theta_.pk.lambda_k;
    for (std::size_t i = 0; i < n_patients_; ++i) {
      log_dose_[i] = std::log(data_.dose_amount(data_.patients[i]));
      log_v_[i] = std::log(v0);
      k_[i] = k0;
      ssr_[i] = patient_ssr(i, log_v_[i], k_[i]);
      n_obs_ += data_.patients[i].times.size();
    }
    recompute_sufficient_stats();
    cur_outcome_ll_ = outcome_ll(theta_);
  }

  void recompute_sufficient_stats() {
    sum_v_ = sum_log_v_ = sum_k_ = sum_log_k_ = total_ssr_ = 0.0;
    for (std::size_t i = 0; i < n_patients_; ++i) {
      sum_v_ += std::exp(log_v_[i]);
      sum_log_v_ += log_v_[i];
      sum_k_ += k_[i];
      sum_log_k_ += std::log(k_[i]);
      total_ssr_ += ssr_[i];
    }
  }

  double patient_ssr(std::size_t i, double log_v, double k) const {
    const auto& p = data_.patients[i];
    double s = 0.0;
    for (std::size_t j = 0; j < p.times.size(); ++j) {
      const double r = p.log_concentrations[j] - (log_dose_[i] - log_v - k * p.times[j]);
      s += r * r;
    }
    return s;
  }

  // Sum over patients of log Gamma(V_i | alpha_v, lambda_v) + log Gamma(k_i | ...).
  double latent_prior_sum(const PkPopulation& pk) const {
    if (n_patients_ == 0) return 0.0;
    const double n = static_cast<double>(n_patients_);
    return n * (pk.alpha_v * std::log(pk.lambda_v) - log_gamma_fn(pk.alpha_v)) +
           (pk.alpha_v - 1.0) * sum_log_v_ - pk.lambda_v * sum_v_ +
           n * (pk.alpha_k * std::log(pk.lambda_k) - log_gamma_fn(pk.alpha_k)) +
           (pk.alpha_k - 1.0) * sum_log_k_ - pk.lambda_k * sum_k_;
  }

  double pk_loglik(double sigma) const {
    const double n = static_cast<double>(n_obs_);
    return -n * std::log(sigma) - total_ssr_ / (2.0 * sigma * sigma);
  }

  double outcome_ll(const ModelParams& theta) const {
    return dose_outcome_loglik(theta, data_.grid, counts_, include_efficacy_);
  }

  double& param_ref(ModelParams& t, std::size_t b) const {
    switch (b) {
      case kAlphaV: return t.pk.alpha_v;
      case kLambdaV: return t.pk.lambda_v;
      case kAlphaK: return t.pk.alpha_k;
      case kLambdaK: return t.pk.lambda_k;
      case kSigma: return t.sigma;
      case kBeta0: return t.tox.beta0;
      case kBeta1: return t.tox.beta1;
      case kEmax: return t.pd.e_max;
      case kEd50: return t.pd.ed50;
      default: return t.pd.gamma;
    }
  }

  void record(std::size_t block, bool accepted, long it, bool adapting) {
    steps_[block].record(accepted, it, adapting, settings_.target_acceptance);
    if (!adapting) {
      auto& s = stats_[stat_index_[block]];
      ++s.proposed;
      if (accepted) ++s.accepted;
    }
  }

  void update_theta_block(std::size_t b, long it, bool adapting) {
    ModelParams prop = theta_;
    double& x = param_ref(prop, b);
    double log_jacobian = 0.0;
    const double step = steps_[b].step();
    if (b == kBeta0) {
      x += step * standard_normal(rng_);
    } else if (b == kAlphaV || b == kAlphaK) {
      // the shape minus one moves on the log scale
      const double cur = x - 1.0;
      const double next = cur * std::exp(step * standard_normal(rng_));
      x = 1.0 + next;
      log_jacobian = std::log(next) - std::log(cur);
    } else {
      const double cur = x;
      x = cur * std::exp(step * standard_normal(rng_));
      log_jacobian = std::log(x) - std::log(cur);
    }
    if (!prior_.free_gamma) prop.pd.gamma = 2.0 / prop.pk.alpha_k;
    if (!prop.valid()) {
      record(b, false, it, adapting);
      return;
    }
    double delta = log_prior(prop, prior_) - log_prior(theta_, prior_) + log_jacobian;
    double prop_outcome = cur_outcome_ll_;
    if (b == kSigma) {
      delta += pk_loglik(prop.sigma) - pk_loglik(theta_.sigma);
    } else {
      if (b <= kLambdaK) delta += latent_prior_sum(prop.pk) - latent_prior_sum(theta_.pk);
      prop_outcome = outcome_ll(prop);
      delta += prop_outcome - cur_outcome_ll_;
    }
    const bool acc = detail::metropolis_accept(rng_, delta);
    if (acc) {
      theta_ = prop;
      cur_outcome_ll_ = prop_outcome;
    }
    record(b, acc, it, adapting);
  }

  void update_latents(long it, bool adapting) {
    const double inv2s2 = 1.0 / (2.0 * theta_.sigma * theta_.sigma);
    const auto& pk = theta_.pk;
    for (std::size_t i = 0; i < n_patients_; ++i) {
      // V_i on the log scale: target alpha_v log V - lambda_v V - SSR / (2 s^2)
      {
        const double cur = log_v_[i];
        const double prop = cur + v_steps_[i].step() * standard_normal(rng_);
        const double prop_ssr = patient_ssr(i, prop, k_[i]);
        const double delta = pk.alpha_v * (prop - cur) - pk.lambda_v * (std::exp(prop) - std::exp(cur)) -
                             (prop_ssr - ssr_[i]) * inv2s2;
        const bool acc = detail::metropolis_accept(rng_, delta);
        if (acc) {
          sum_v_ += std::exp(prop) - std::exp(cur);
          sum_log_v_ += prop - cur;
          total_ssr_ += prop_ssr - ssr_[i];
          log_v_[i] = prop;
          ssr_[i] = prop_ssr;
        }
        v_steps_[i].record(acc, it, adapting, settings_.target_acceptance);
        record(kLatentV, acc, it, adapting);
      }
      {
        const double cur = k_[i];
        const double prop = cur * std::exp(k_steps_[i].step() * standard_normal(rng_));
        const double prop_ssr = patient_ssr(i, log_v_[i], prop);
        const double delta = pk.alpha_k * (std::log(prop) - std::log(cur)) -
                             pk.lambda_k * (prop - cur) - (prop_ssr - ssr_[i]) * inv2s2;
        const bool acc = detail::metropolis_accept(rng_, delta);
        if (acc) {
          sum_k_ += prop - cur;
          sum_log_k_ += std::log(prop) - std::log(cur);
          total_ssr_ += prop_ssr - ssr_[i];
          k_[i] = prop;
          ssr_[i] = prop_ssr;
        }
        k_steps_[i].record(acc, it, adapting, settings_.target_acceptance);
        record(kLatentK, acc, it, adapting);
      }
    }
  }

  void sweep(long it, bool adapting) {
    update_latents(it, adapting);
    for (std::size_t b = kAlphaV; b <= kGamma; ++b) {
      if (b == kGamma && !prior_.free_gamma) continue;
      update_theta_block(b, it, adapting);
    }
    // Incremental sums drift slowly; refresh them once per sweep.
    if (it % 64 == 0) recompute_sufficient_stats();
  }

  const Phase1Data& data_;
  PriorSpec prior_;
  McmcSettings settings_;
  bool include_efficacy_;
  std::uint64_t seed_;
  Rng rng_;
  DoseCounts counts_;

  std::size_t n_patients_ = 0;
  std::size_t n_obs_ = 0;
  ModelParams theta_;
  std::vector<double> log_v_, k_, ssr_, log_dose_;
  double sum_v_ = 0, sum_log_v_ = 0, sum_k_ = 0, sum_log_k_ = 0, total_ssr_ = 0;
  double cur_outcome_ll_ = 0.0;

  std::vector<detail::AdaptiveStep> steps_;
  std::vector<detail::AdaptiveStep> v_steps_, k_steps_;
  std::vector<BlockStats> stats_;
  std::array<std::size_t, kBlockCount> stat_index_{};
};

// Draws from the joint posterior; with no patients the chain targets the prior.
inline PosteriorDraws sample_posterior(const Phase1Data& data, const PriorSpec& prior,
                                       const McmcSettings& settings, bool include_efficacy,
                                       std::uint64_t seed) {
  return PosteriorSampler(data, prior, settings, include_efficacy, seed).run();
}

}  // namespace pedoop
