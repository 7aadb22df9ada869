#pragma once

#include "pedoop/pkpd.hpp"
#include "pedoop/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace pedoop {

// Row-major (draw x dose) matrix of probabilities.
class CurveMatrix {
 public:
  CurveMatrix() = default;
  CurveMatrix(std::size_t draws, std::size_t doses, double fill = 0.0)
      : draws_(draws), doses_(doses), values_(draws * doses, fill) {}

  std::size_t draws() const { return draws_; }
  std::size_t doses() const { return doses_; }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t draw, std::size_t dose) { return values_[draw * doses_ + dose]; }
  double operator()(std::size_t draw, std::size_t dose) const {
    return values_[draw * doses_ + dose];
  }
  std::span<const double> row(std::size_t draw) const {
    return {values_.data() + draw * doses_, doses_};
  }

  std::vector<double> column(std::size_t dose) const {
    check_dose(dose);
    std::vector<double> c(draws_);
    for (std::size_t s = 0; s < draws_; ++s) c[s] = (*this)(s, dose);
    return c;
  }

  double column_mean(std::size_t dose) const {
    check_dose(dose);
    if (draws_ == 0) throw std::domain_error("CurveMatrix: no draws");
    double m = 0.0;
    for (std::size_t s = 0; s < draws_; ++s) m += (*this)(s, dose);
    return m / static_cast<double>(draws_);
  }

  std::vector<double> means() const {
    std::vector<double> m(doses_);
    for (std::size_t d = 0; d < doses_; ++d) m[d] = column_mean(d);
    return m;
  }

  // Type-7 (linear interpolation) sample quantile.
  double column_quantile(std::size_t dose, double prob) const {
    auto c = column(dose);
    if (c.empty()) throw std::domain_error("CurveMatrix: no draws");
    std::sort(c.begin(), c.end());
    const double h = (static_cast<double>(c.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, c.size() - 1);
    return c[lo] + (h - static_cast<double>(lo)) * (c[hi] - c[lo]);
  }

 private:
  void check_dose(std::size_t dose) const {
    if (dose >= doses_) throw std::out_of_range("CurveMatrix: dose index out of range");
  }

  std::size_t draws_ = 0;
  std::size_t doses_ = 0;
  std::vector<double> values_;
};

struct DoseCurves {
  CurveMatrix tox;
  CurveMatrix eff;
};

// p_d and q_d for every retained draw.
inline DoseCurves dose_curves(const PosteriorDraws& draws, const DoseGrid& grid) {
  if (draws.empty()) throw std::domain_error("dose_curves: no posterior draws");
  DoseCurves c{CurveMatrix(draws.size(), grid.size()), CurveMatrix(draws.size(), grid.size())};
  for (std::size_t s = 0; s < draws.size(); ++s) {
    const auto& t = draws.theta[s];
    for (std::size_t d = 0; d < grid.size(); ++d) {
      c.tox(s, d) = toxicity_prob(grid.amount(d), t.pk, t.tox);
      c.eff(s, d) = efficacy_prob(grid.amount(d), t.pk, t.pd);
    }
  }
  return c;
}

enum class Tail { Above, Below };

// Fraction of draws strictly beyond `threshold` in the given direction.
inline double tail_prob(const CurveMatrix& m, std::size_t dose, double threshold, Tail tail) {
  if (m.draws() == 0) throw std::domain_error("tail_prob: no draws");
  if (dose >= m.doses()) throw std::out_of_range("tail_prob: dose index out of range");
  std::size_t hits = 0;
  for (std::size_t s = 0; s < m.draws(); ++s) {
    const double v = m(s, dose);
    if (tail == Tail::Above ? v > threshold : v < threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(m.draws());
}

struct CurveSummary {
  std::vector<double> mean;
  std::vector<double> lower;  // 2.5%
  std::vector<double> upper;  // 97.5%
};

inline CurveSummary summarize(const CurveMatrix& m) {
  CurveSummary s;
  for (std::size_t d = 0; d < m.doses(); ++d) {
    s.mean.push_back(m.column_mean(d));
    s.lower.push_back(m.column_quantile(d, 0.025));
    s.upper.push_back(m.column_quantile(d, 0.975));
  }
  return s;
}

}  // namespace pedoop
