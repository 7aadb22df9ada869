#pragma once

// Logit + Emax dose-response model that ignores PK data:
//   logit(p_d) = b0 + b1 log d
//   q_d = 1 - exp(-Emax d^g / (ED50^g + d^g))

#include "pedoop/curves.hpp"
#include "pedoop/data.hpp"
#include "pedoop/distributions.hpp"
#include "pedoop/posterior.hpp"
#include "pedoop/random.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace pedoop {

struct ComparatorParams {
  double beta0 = -3.0;
  double beta1 = 1.0;
  double e_max = 1.0;
  double ed50 = 100.0;
  double gamma = 1.0;

  bool valid() const {
    auto pos = [](double x) { return std::isfinite(x) && x > 0.0; };
    return std::isfinite(beta0) && pos(beta1) && pos(e_max) && pos(ed50) && pos(gamma);
  }
  bool operator==(const ComparatorParams&) const = default;
};

struct ComparatorPrior {
  NormalPrior beta0{-3.0, 100.0};
  LogNormalPrior beta1{-1.0, 2.0};
  LogNormalPrior e_max{-1.0, 0.5};
  GammaPrior ed50{10.0, 0.1};
  GammaPrior gamma{0.1, 0.1};
  bool operator==(const ComparatorPrior&) const = default;
};

inline double comparator_tox_prob(double dose, const ComparatorParams& c) {
  return expit(c.beta0 + c.beta1 * std::log(dose));
}

inline double comparator_effect(double dose, const ComparatorParams& c) {
  // Emax / (1 + (ED50 / d)^g)
  return c.e_max / (1.0 + std::exp(c.gamma * (std::log(c.ed50) - std::log(dose))));
}

inline double comparator_eff_prob(double dose, const ComparatorParams& c) {
  return efficacy_link(comparator_effect(dose, c));
}

inline double comparator_log_prior(const ComparatorParams& c, const ComparatorPrior& prior) {
  return normal_logpdf(c.beta0, prior.beta0.mean, std::sqrt(prior.beta0.variance)) +
         lognormal_logpdf(c.beta1, prior.beta1.log_mean, prior.beta1.log_variance) +
         lognormal_logpdf(c.e_max, prior.e_max.log_mean, prior.e_max.log_variance) +
         gamma_logpdf(c.ed50, prior.ed50.shape, prior.ed50.rate) +
         gamma_logpdf(c.gamma, prior.gamma.shape, prior.gamma.rate);
}

inline double comparator_loglik(const ComparatorParams& c, const DoseGrid& grid,
                                const DoseCounts& counts, bool include_efficacy) {
  double ll = 0.0;
  for (std::size_t d = 0; d < grid.size(); ++d) {
    const double log_dose = std::log(grid.amount(d));
    if (counts.n[d] > 0) {
      const double x = c.beta0 + c.beta1 * log_dose;
      ll += binomial_logpmf(counts.y[d], counts.n[d], -detail::softplus(-x), -detail::softplus(x));
    }
    if (include_efficacy && counts.n_eff[d] > 0) {
      const double eta = comparator_effect(grid.amount(d), c);
      const double log_q = eta > 0.0 ? std::log(-std::expm1(-eta)) : kNegInf;
      ll += binomial_logpmf(counts.z[d], counts.n_eff[d], log_q, -eta);
    }
  }
  return ll;
}

struct ComparatorDraws {
  std::vector<ComparatorParams> theta;
  McmcMeta meta;
  bool include_efficacy = false;

  std::size_t size() const { return theta.size(); }
  bool empty() const { return theta.empty(); }
};

inline ComparatorDraws sample_comparator_posterior(const Phase1Data& data,
                                                   const ComparatorPrior& prior,
                                                   const McmcSettings& settings,
                                                   bool include_efficacy, std::uint64_t seed) {
  settings.validate();
  data.validate();
  const DoseCounts counts = data.counts();
  Rng rng = make_rng(seed);

  ComparatorParams cur{prior.beta0.mean, prior.beta1.mean(), prior.e_max.mean(),
                       prior.ed50.mean(), prior.gamma.mean()};
  auto target = [&](const ComparatorParams& c) {
    return comparator_log_prior(c, prior) + comparator_loglik(c, data.grid, counts, include_efficacy);
  };
  double cur_target = target(cur);

  constexpr std::size_t kBlocks = 5;
  static const std::array<const char*, kBlocks> names = {"beta0", "beta1", "e_max", "ed50", "gamma"};
  std::array<detail::AdaptiveStep, kBlocks> steps = {
      detail::AdaptiveStep(1.0), detail::AdaptiveStep(0.5), detail::AdaptiveStep(0.5),
      detail::AdaptiveStep(0.5), detail::AdaptiveStep(0.5)};

  ComparatorDraws out;
  out.include_efficacy = include_efficacy;
  out.meta.settings = settings;
  out.meta.seed = seed;
  for (auto* n : names) out.meta.blocks.push_back({n, 0, 0});
  out.theta.reserve(settings.retained());

  auto field = [](ComparatorParams& c, std::size_t b) -> double& {
    switch (b) {
      case 0: return c.beta0;
      case 1: return c.beta1;
      case 2: return c.e_max;
      case 3: return c.ed50;
      default: return c.gamma;
    }
  };

  for (long it = 0; it < settings.iterations; ++it) {
    const bool adapting = it < settings.burn_in;
    for (std::size_t b = 0; b < kBlocks; ++b) {
      ComparatorParams prop = cur;
      double& x = field(prop, b);
      double log_jacobian = 0.0;
      if (b == 0) {
        x += steps[b].step() * standard_normal(rng);
      } else {
        const double old = x;
        x = old * std::exp(steps[b].step() * standard_normal(rng));
        log_jacobian = std::log(x) - std::log(old);
      }
      bool acc = false;
      double prop_target = kNegInf;
      if (prop.valid()) {
        prop_target = target(prop);
        acc = detail::metropolis_accept(rng, prop_target - cur_target + log_jacobian);
      }
      if (acc) {
        cur = prop;
        cur_target = prop_target;
      }
      steps[b].record(acc, it, adapting, settings.target_acceptance);
      if (!adapting) {
        ++out.meta.blocks[b].proposed;
        if (acc) ++out.meta.blocks[b].accepted;
      }
    }
    if (!adapting && (it - settings.burn_in) % settings.thin == 0) out.theta.push_back(cur);
  }
  return out;
}

inline DoseCurves dose_curves(const ComparatorDraws& draws, const DoseGrid& grid) {
  if (draws.empty()) throw std::domain_error("dose_curves: no comparator draws");
  DoseCurves c{CurveMatrix(draws.size(), grid.size()), CurveMatrix(draws.size(), grid.size())};
  for (std::size_t s = 0; s < draws.size(); ++s) {
    for (std::size_t d = 0; d < grid.size(); ++d) {
      c.tox(s, d) = comparator_tox_prob(grid.amount(d), draws.theta[s]);
      c.eff(s, d) = comparator_eff_prob(grid.amount(d), draws.theta[s]);
    }
  }
  return c;
}

}  // namespace pedoop
