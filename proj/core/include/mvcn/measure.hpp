#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mvcn {

/// Largest equal-size sample handled by the exact multi-dimensional path.
inline constexpr std::size_t kMaxExactPoints = 512;
/// Largest ensemble (number of member measures) for the nested distance.
inline constexpr std::size_t kMaxEnsembleMembers = 256;

/// Weighted point cloud in R^d. Points are stored row-major (n x d).
/// Weights default to uniform 1/n and are then not materialized.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(std::size_t dim, std::vector<double> points);
  EmpiricalMeasure(std::size_t dim, std::vector<double> points, std::vector<double> weights);

  static EmpiricalMeasure dirac(std::span<const double> x);

  std::size_t size() const { return size_; }
  std::size_t dim() const { return dim_; }
  bool uniform() const { return weights_.empty(); }

  std::span<const double> point(std::size_t i) const { return {points_.data() + i * dim_, dim_}; }
  std::span<const double> points() const { return points_; }
  double weight(std::size_t i) const { return weights_.empty() ? 1.0 / static_cast<double>(size_) : weights_[i]; }
  /// Empty for uniform measures.
  std::span<const double> explicit_weights() const { return weights_; }

  /// True when every point coincides (a Dirac mass, possibly repeated).
  bool is_point_mass() const;

 private:
  std::size_t dim_ = 0;
  std::size_t size_ = 0;
  std::vector<double> points_;
  std::vector<double> weights_;
};

/// Finite family of measures with (default uniform) weights; stands for a
/// sample of a law on the space of measures.
class MeasureEnsemble {
 public:
  explicit MeasureEnsemble(std::vector<EmpiricalMeasure> members);
  MeasureEnsemble(std::vector<EmpiricalMeasure> members, std::vector<double> weights);

  std::size_t size() const { return members_.size(); }
  const EmpiricalMeasure& member(std::size_t i) const { return members_[i]; }
  const std::vector<EmpiricalMeasure>& members() const { return members_; }
  bool uniform() const { return weights_.empty(); }
  double weight(std::size_t i) const {
    return weights_.empty() ? 1.0 / static_cast<double>(members_.size()) : weights_[i];
  }

 private:
  std::vector<EmpiricalMeasure> members_;
  std::vector<double> weights_;
};

/// A point of the product space: a law together with a law over laws.
struct CouplePoint {
  EmpiricalMeasure law;
  MeasureEnsemble meta_law;
};

/// Ground cost |x - y|^p. Computed as (sum of squared differences)^(p/2),
/// with p = 2 returning the squared distance directly and p = 1 its root.
double ground_cost(std::span<const double> x, std::span<const double> y, double p);

/// Exact W_p between empirical measures.
///  - either side a point mass: closed form through wasserstein_to_dirac;
///  - d = 1: quantile (sorted) coupling, any sizes and weights;
///  - d >= 2: equal-size uniform samples with n <= kMaxExactPoints, solved as
///    an assignment problem on the cost matrix |x_i - y_j|^p.
double wasserstein_p(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p);

/// Optimal transport cost (W_p^p) through the same routing as wasserstein_p.
double transport_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p);

/// W_p^p through the assignment solver, regardless of dimension.
/// Requires equal-size uniform samples.
double assignment_transport_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p);

/// W_p^p in one dimension by merging the two quantile functions.
double quantile_transport_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p);

/// Sum_i w_i |x_i - x0|^p, i.e. W_p^p against the Dirac mass at x0.
double dirac_cost(const EmpiricalMeasure& mu, std::span<const double> x0, double p);

/// (Sum_i w_i |x_i - x0|^p)^(1/p); exact because the only coupling with a
/// Dirac mass is the product coupling.
double wasserstein_to_dirac(const EmpiricalMeasure& mu, std::span<const double> x0, double p);

/// Nested distance between two equal-size uniform ensembles: assignment over
/// the M x M matrix of inner W_p^p, returned as (min cost / M)^(1/p).
double nested_wasserstein(const MeasureEnsemble& a, const MeasureEnsemble& b, double p);

/// W_p on the law plus the nested distance on the meta-law.
double product_distance(const CouplePoint& a, const CouplePoint& b, double p);

/// First k points of a uniform sample, as a uniform measure.
EmpiricalMeasure prefix_subsample(const EmpiricalMeasure& mu, std::size_t k);

}  // namespace mvcn
