#include "mvcn/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mvcn/assignment.hpp"
#include "mvcn/error.hpp"
#include "mvcn/stats.hpp"

namespace mvcn {
namespace {

double root_p(double cost, double p) {
  if (p == 1.0) return cost;
  if (p == 2.0) return std::sqrt(cost);
  return std::pow(cost, 1.0 / p);
}

double abs_power(double diff, double p) {
  const double a = std::fabs(diff);
  if (p == 1.0) return a;
  if (p == 2.0) return a * a;
  return std::pow(a, p);
}

void require_order(double p) {
  if (!(p >= 1.0) || !std::isfinite(p))
    throw InvalidArgumentError("Wasserstein order p must be a finite real >= 1, got " + std::to_string(p));
}

void require_same_dim(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.dim() != b.dim())
    throw DimensionMismatchError("measures live in different dimensions: " + std::to_string(a.dim()) + " vs " +
                                 std::to_string(b.dim()));
}

struct WeightedValue {
  double value;
  double weight;
};

std::vector<WeightedValue> sorted_1d(const EmpiricalMeasure& m) {
  std::vector<WeightedValue> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = {m.points()[i], m.weight(i)};
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.value < b.value; });
  return out;
}

// Canonical accumulation of matched pair costs: ascending order, so the
// result depends only on the multiset of costs.
double canonical_sum(std::vector<double> costs) {
  std::sort(costs.begin(), costs.end());
  double s = 0.0;
  for (double c : costs) s += c;
  return s;
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> points)
    : dim_(dim), points_(std::move(points)) {
  if (dim_ == 0) throw InvalidArgumentError("EmpiricalMeasure: dimension must be >= 1");
  if (points_.empty() || points_.size() % dim_ != 0)
    throw InvalidArgumentError("EmpiricalMeasure: need a non-empty n x d point array");
  size_ = points_.size() / dim_;
  for (double v : points_)
    if (!std::isfinite(v)) throw InvalidArgumentError("EmpiricalMeasure: points must be finite");
}

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> points, std::vector<double> weights)
    : EmpiricalMeasure(dim, std::move(points)) {
  if (weights.size() != size_)
    throw InvalidArgumentError("EmpiricalMeasure: expected " + std::to_string(size_) + " weights, got " +
                               std::to_string(weights.size()));
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgumentError("EmpiricalMeasure: weights must be >= 0");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-12)
    throw InvalidArgumentError("EmpiricalMeasure: weights must sum to 1 (got " + std::to_string(total) + ")");
  weights_ = std::move(weights);
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::span<const double> x) {
  return EmpiricalMeasure(x.size(), std::vector<double>(x.begin(), x.end()));
}

bool EmpiricalMeasure::is_point_mass() const {
  for (std::size_t i = 1; i < size_; ++i)
    for (std::size_t k = 0; k < dim_; ++k)
      if (points_[i * dim_ + k] != points_[k]) return false;
  return true;
}

MeasureEnsemble::MeasureEnsemble(std::vector<EmpiricalMeasure> members) : members_(std::move(members)) {
  if (members_.empty()) throw InvalidArgumentError("MeasureEnsemble: need at least one member");
  for (const auto& m : members_)
    if (m.dim() != members_.front().dim()) throw DimensionMismatchError("MeasureEnsemble: mixed dimensions");
}

MeasureEnsemble::MeasureEnsemble(std::vector<EmpiricalMeasure> members, std::vector<double> weights)
    : MeasureEnsemble(std::move(members)) {
  if (weights.size() != members_.size()) throw InvalidArgumentError("MeasureEnsemble: weight count mismatch");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidArgumentError("MeasureEnsemble: weights must be >= 0");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-12) throw InvalidArgumentError("MeasureEnsemble: weights must sum to 1");
  weights_ = std::move(weights);
}

double ground_cost(std::span<const double> x, std::span<const double> y, double p) {
  double sq = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = x[k] - y[k];
    sq += d * d;
  }
  if (p == 2.0) return sq;
  if (p == 1.0) return std::sqrt(sq);
  return std::pow(sq, 0.5 * p);
}

double dirac_cost(const EmpiricalMeasure& mu, std::span<const double> x0, double p) {
  if (x0.size() != mu.dim())
    throw DimensionMismatchError("dirac_cost: point has dimension " + std::to_string(x0.size()) + ", measure " +
                                 std::to_string(mu.dim()));
  std::vector<double> terms(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) terms[i] = ground_cost(mu.point(i), x0, p);
  if (mu.uniform()) return reproducible_sum(terms) / static_cast<double>(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) terms[i] *= mu.weight(i);
  return reproducible_sum(terms);
}

double wasserstein_to_dirac(const EmpiricalMeasure& mu, std::span<const double> x0, double p) {
  require_order(p);
  return root_p(dirac_cost(mu, x0, p), p);
}

double quantile_transport_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
  require_same_dim(mu, nu);
  if (mu.dim() != 1) throw DimensionMismatchError("quantile coupling is only defined in one dimension");
  if (mu.uniform() && nu.uniform() && mu.size() == nu.size()) {
    std::vector<double> a(mu.points().begin(), mu.points().end());
    std::vector<double> b(nu.points().begin(), nu.points().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += abs_power(a[i] - b[i], p);
    return s / static_cast<double>(a.size());
  }
  const auto a = sorted_1d(mu);
  const auto b = sorted_1d(nu);
  std::size_t i = 0, j = 0;
  double ra = a[0].weight, rb = b[0].weight;
  double s = 0.0;
  while (i < a.size() && j < b.size()) {
    const double c = abs_power(a[i].value - b[j].value, p);
    if (ra < rb) {
      s += ra * c;
      rb -= ra;
      if (++i < a.size()) ra = a[i].weight;
    } else if (rb < ra) {
      s += rb * c;
      ra -= rb;
      if (++j < b.size()) rb = b[j].weight;
    } else {
      s += ra * c;
      if (++i < a.size()) ra = a[i].weight;
      if (++j < b.size()) rb = b[j].weight;
    }
  }
  return s;
}

double assignment_transport_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
  require_same_dim(mu, nu);
  if (!mu.uniform() || !nu.uniform() || mu.size() != nu.size())
    throw InvalidArgumentError("exact multi-dimensional Wasserstein needs equal-size uniform samples (got " +
                               std::to_string(mu.size()) + " and " + std::to_string(nu.size()) + " points)");
  const std::size_t n = mu.size();
  if (n > kMaxExactPoints)
    throw CapacityError("exact Wasserstein supports at most " + std::to_string(kMaxExactPoints) +
                        " points per sample, got " + std::to_string(n) + "; subsample both measures");
  Matrix cost(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost(i, j) = ground_cost(mu.point(i), nu.point(j), p);
  const Assignment match = assignment_solve(cost);
  std::vector<double> matched(n);
  for (std::size_t i = 0; i < n; ++i) matched[i] = cost(i, match.permutation[i]);
  return canonical_sum(std::move(matched)) / static_cast<double>(n);
}

double transport_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
  require_order(p);
  require_same_dim(mu, nu);
  const bool mu_point = mu.is_point_mass();
  const bool nu_point = nu.is_point_mass();
  if (mu_point && nu_point) return ground_cost(mu.point(0), nu.point(0), p);
  if (nu_point) return dirac_cost(mu, nu.point(0), p);
  if (mu_point) return dirac_cost(nu, mu.point(0), p);
  if (mu.dim() == 1) return quantile_transport_cost(mu, nu, p);
  return assignment_transport_cost(mu, nu, p);
}

double wasserstein_p(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
  return root_p(transport_cost(mu, nu, p), p);
}

double nested_wasserstein(const MeasureEnsemble& a, const MeasureEnsemble& b, double p) {
  require_order(p);
  if (!a.uniform() || !b.uniform() || a.size() != b.size())
    throw InvalidArgumentError("nested Wasserstein needs equal-size uniform ensembles (got " +
                               std::to_string(a.size()) + " and " + std::to_string(b.size()) + " members)");
  const std::size_t m = a.size();
  if (m > kMaxEnsembleMembers)
    throw CapacityError("nested Wasserstein supports at most " + std::to_string(kMaxEnsembleMembers) +
                        " members, got " + std::to_string(m));
  if (a.member(0).dim() != b.member(0).dim())
    throw DimensionMismatchError("nested Wasserstein: ensembles live in different dimensions");
  Matrix cost(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) cost(i, j) = transport_cost(a.member(i), b.member(j), p);
  const Assignment match = assignment_solve(cost);
  std::vector<double> matched(m);
  for (std::size_t i = 0; i < m; ++i) matched[i] = cost(i, match.permutation[i]);
  return root_p(canonical_sum(std::move(matched)) / static_cast<double>(m), p);
}

double product_distance(const CouplePoint& a, const CouplePoint& b, double p) {
  return wasserstein_p(a.law, b.law, p) + nested_wasserstein(a.meta_law, b.meta_law, p);
}

EmpiricalMeasure prefix_subsample(const EmpiricalMeasure& mu, std::size_t k) {
  if (!mu.uniform()) throw InvalidArgumentError("prefix_subsample: measure must be uniform");
  if (k == 0) throw InvalidArgumentError("prefix_subsample: k must be >= 1");
  if (k >= mu.size()) return mu;
  const auto pts = mu.points();
  return EmpiricalMeasure(mu.dim(), std::vector<double>(pts.begin(), pts.begin() + static_cast<long>(k * mu.dim())));
}

}  // namespace mvcn
