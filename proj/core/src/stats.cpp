#include "mvcn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvcn {
namespace {

// Boundary 2^k with n * bound <= 2^(k-2). Adding (boundary + r) - boundary
// keeps the high part of r: a multiple of ulp(2^k)/2 whose running sum stays
// below 2^(k-1), so the accumulation is exact in any order. The residual is
// then at most ulp(2^k)/2, which bounds the next fold.
double fold_boundary(double bound, std::size_t n) {
  int exponent = 0;
  std::frexp(bound * static_cast<double>(n), &exponent);
  return std::ldexp(1.0, exponent + 2);
}

// Deterministic result for inputs with inf or NaN.
double sorted_sum(std::span<const double> values) {
  std::vector<double> copy(values.begin(), values.end());
  std::sort(copy.begin(), copy.end(), [](double a, double b) {
    if (std::isnan(a)) return false;
    if (std::isnan(b)) return true;
    return a < b;
  });
  double s = 0.0;
  for (double v : copy) s += v;
  return s;
}

// Three exact folds, combined with one error-free addition so that
// cancellation between the folds costs nothing.
double folded_sum(std::span<const double> values, double amax) {
  const std::size_t n = values.size();
  const double b1 = fold_boundary(amax, n);
  const double b2 = fold_boundary(std::ldexp(b1, -53), n);
  const double b3 = fold_boundary(std::ldexp(b2, -53), n);
  double s1 = 0.0, s2 = 0.0, s3 = 0.0;
  for (double v : values) {
    const double h1 = (b1 + v) - b1;
    v -= h1;
    const double h2 = (b2 + v) - b2;
    v -= h2;
    s1 += h1;
    s2 += h2;
    s3 += (b3 + v) - b3;
  }
  const double hi = s1 + s2;
  const double bv = hi - s1;
  const double lo = (s1 - (hi - bv)) + (s2 - bv);
  return hi + (lo + s3);
}

}  // namespace

double reproducible_sum(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double amax = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) return sorted_sum(values);
    amax = std::max(amax, std::fabs(v));
  }
  if (amax == 0.0) return 0.0;
  if (amax <= std::ldexp(1.0, 1000) / static_cast<double>(values.size())) return folded_sum(values, amax);
  // The boundaries would overflow: sum exactly rescaled copies instead.
  std::vector<double> scaled(values.begin(), values.end());
  for (double& v : scaled) v = std::ldexp(v, -128);
  return std::ldexp(folded_sum(scaled, std::ldexp(amax, -128)), 128);
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  LinearFit fit;
  const std::size_t n = std::min(x.size(), y.size());
  fit.points = n;
  if (n < 2) {
    fit.slope = std::numeric_limits<double>::quiet_NaN();
    fit.intercept = n == 1 ? y[0] : std::numeric_limits<double>::quiet_NaN();
    fit.slope_stderr = std::numeric_limits<double>::quiet_NaN();
    return fit;
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    sxx += dx * dx;
    sxy += dx * (y[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (n >= 3) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - (fit.intercept + fit.slope * x[i]);
      ssr += r * r;
    }
    fit.slope_stderr = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
  } else {
    fit.slope_stderr = std::numeric_limits<double>::quiet_NaN();
  }
  return fit;
}

double mean(std::span<const double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace mvcn
