#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mvcn {

/// Order-independent summation: the result is bitwise identical for every
/// permutation of `values`. Uses three-fold exact pre-rounding extraction
/// against power-of-two boundaries, so partial sums never round.
double reproducible_sum(std::span<const double> values);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;  // NaN when fewer than three points
  std::size_t points = 0;
};

/// Ordinary least squares y = intercept + slope * x.
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> values);

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_stddev(std::span<const double> values);

}  // namespace mvcn
