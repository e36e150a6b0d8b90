#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mvcn/measure.hpp"
#include "mvcn/model.hpp"

namespace mvcn {

/// Sample-based check of the growth condition
///   |f|^2 <= c1 (1 + |x|^l + W2^2(u, delta_0)),
///   |g|^2 + |g0|^2 <= c2 (1 + |x|^2 + W2^2(u, delta_0)),
/// with Frobenius norms for the diffusion matrices.
struct GrowthReport {
  double max_drift_ratio = 0.0;
  double max_diffusion_ratio = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  std::size_t samples = 0;
  bool pass = false;
};

inline constexpr double kAssumptionSlack = 1e-9;

/// Evaluates every (state, measure) combination.
GrowthReport check_growth(const ModelSpec& model, const std::vector<std::vector<double>>& states,
                          const std::vector<EmpiricalMeasure>& measures);

struct DissipativitySample {
  std::vector<double> x;
  std::vector<double> y;
  EmpiricalMeasure u;
  EmpiricalMeasure v;
};

struct DissipativityReport {
  std::size_t checked = 0;
  std::size_t skipped = 0;        // degenerate samples (x = y and u = v)
  double max_excess = 0.0;        // max of LHS - RHS over checked samples
  double fitted_c3 = 0.0;         // least squares on LHS = -c3 |x-y|^2 + c4 W2^2
  double fitted_c4 = 0.0;
  double fitted_c5 = 0.0;         // smallest c5 making the one-point bound hold
  double p = 0.0;
  bool pass = false;
};

/// 2 (x-y)^T (f(x,u) - f(y,v)) + (p-1) (|g(x,u)-g(y,v)|^2 + |g0(x,u)-g0(y,v)|^2).
/// Invariant under swapping (x,u) with (y,v), bit for bit.
double dissipativity_lhs(const ModelSpec& model, std::span<const double> x, const EmpiricalMeasure& u,
                         std::span<const double> y, const EmpiricalMeasure& v, double p);

/// Checks LHS <= -c3 |x-y|^2 + c4 W2^2(u, v) + slack on every sample, with
/// W2 from the exact optimal coupling.
DissipativityReport check_dissipativity(const ModelSpec& model, const std::vector<DissipativitySample>& samples,
                                        double p);

}  // namespace mvcn
