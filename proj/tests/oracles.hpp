#pragma once

// Independent reference computations used by unit tests and the acceptance
// binary. Deliberately naive: exhaustive search and textbook formulas only.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "mvcn/matrix.hpp"
#include "mvcn/measure.hpp"

namespace mvcn::oracle {

/// Minimum over all n! permutations of sum_i cost(i, perm[i]), summed in row
/// order. Only sensible for n <= 8.
inline double brute_force_assignment(const Matrix& cost) {
  std::vector<std::size_t> perm(cost.rows);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += cost(i, perm[i]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline double power_cost(std::span<const double> x, std::span<const double> y, double p) {
  double sq = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) sq += (x[k] - y[k]) * (x[k] - y[k]);
  if (p == 2.0) return sq;
  if (p == 1.0) return std::sqrt(sq);
  return std::pow(sq, 0.5 * p);
}

inline Matrix cost_matrix(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
  Matrix c(mu.size(), nu.size());
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t j = 0; j < nu.size(); ++j) c(i, j) = power_cost(mu.point(i), nu.point(j), p);
  return c;
}

struct ExhaustiveTransport {
  double best = 0.0;  // smallest W_p^p over all matchings
  /// W_p^p of every matching within a relative 1e-12 of the best. Several
  /// entries mean the optimum is a tie in exact arithmetic (for instance
  /// p = 1 in one dimension) that rounding splits by a few ulps.
  std::vector<double> optimal;

  bool accepts(double cost) const { return std::find(optimal.begin(), optimal.end(), cost) != optimal.end(); }
};

/// W_p^p between equal-size uniform samples by exhaustive matching. Matched
/// costs are summed in ascending order, the library's canonical order, so
/// the optimum is comparable bit for bit.
inline ExhaustiveTransport brute_force_transport(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
  const Matrix cost = cost_matrix(mu, nu, p);
  std::vector<std::size_t> perm(cost.rows);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> matched(cost.rows), totals;
  do {
    for (std::size_t i = 0; i < perm.size(); ++i) matched[i] = cost(i, perm[i]);
    std::sort(matched.begin(), matched.end());
    double s = 0.0;
    for (double c : matched) s += c;
    totals.push_back(s / static_cast<double>(mu.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  ExhaustiveTransport out;
  out.best = *std::min_element(totals.begin(), totals.end());
  for (double t : totals)
    if (t <= out.best + 1e-12 * std::max(1.0, out.best)) out.optimal.push_back(t);
  std::sort(out.optimal.begin(), out.optimal.end());
  out.optimal.erase(std::unique(out.optimal.begin(), out.optimal.end()), out.optimal.end());
  return out;
}

/// Correctly rounded sum of finite values: Shewchuk's non-overlapping
/// partials, as in Python's math.fsum.
inline double exact_sum(std::span<const double> values) {
  std::vector<double> partials;
  for (double x : values) {
    std::size_t i = 0;
    for (double y : partials) {
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  // Round the partials half-even into one double.
  double hi = 0.0;
  if (!partials.empty()) {
    std::size_t n = partials.size();
    hi = partials[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials[--n];
      hi = x + y;
      lo = y - (hi - x);
      if (lo != 0.0) break;
    }
    if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      if (y == x - hi) hi = x;
    }
  }
  return hi;
}

/// Stationary variance of dX = -a (X - b m) dt + s dB + s0 dB0 with m the
/// conditional mean: the mean follows dm = -a (1 - b) m dt + s0 dB0 and the
/// deviation Y = X - m follows dY = -a Y dt + s dB, independent of m.
inline double ou_pooled_variance(double a, double b, double s, double s0) {
  return s * s / (2.0 * a) + s0 * s0 / (2.0 * a * (1.0 - b));
}
inline double ou_mean_variance(double a, double b, double s0) { return s0 * s0 / (2.0 * a * (1.0 - b)); }

}  // namespace mvcn::oracle
