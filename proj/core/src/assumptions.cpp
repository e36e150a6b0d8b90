#include "mvcn/assumptions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvcn/error.hpp"

namespace mvcn {
namespace {

double sq_norm(std::span<const double> v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return s;
}

double second_moment(const EmpiricalMeasure& u) {
  const std::vector<double> origin(u.dim(), 0.0);
  return dirac_cost(u, origin, 2.0);
}

struct Coefficients {
  std::vector<double> drift;
  Matrix g;
  Matrix g0;
};

Coefficients evaluate_all(const ModelSpec& model, std::span<const double> x, const EmpiricalMeasure& u) {
  return {drift_eval(model, x, u), diffusion_idio_eval(model, x, u), diffusion_common_eval(model, x, u)};
}

}  // namespace

GrowthReport check_growth(const ModelSpec& model, const std::vector<std::vector<double>>& states,
                          const std::vector<EmpiricalMeasure>& measures) {
  if (states.empty() || measures.empty()) throw InvalidArgumentError("check_growth: need non-empty samples");
  GrowthReport report;
  report.c1 = model.constants.c1;
  report.c2 = model.constants.c2;
  for (const auto& u : measures) {
    const double w2sq = second_moment(u);
    for (const auto& x : states) {
      const Coefficients c = evaluate_all(model, x, u);
      const double xnorm2 = sq_norm(x);
      const double xnorm_l = std::pow(std::sqrt(xnorm2), model.constants.l);
      const double drift_ratio = sq_norm(c.drift) / (1.0 + xnorm_l + w2sq);
      const double diff_ratio = (sq_norm(c.g.data) + sq_norm(c.g0.data)) / (1.0 + xnorm2 + w2sq);
      report.max_drift_ratio = std::max(report.max_drift_ratio, drift_ratio);
      report.max_diffusion_ratio = std::max(report.max_diffusion_ratio, diff_ratio);
      ++report.samples;
    }
  }
  report.pass = report.max_drift_ratio <= report.c1 + kAssumptionSlack &&
                report.max_diffusion_ratio <= report.c2 + kAssumptionSlack;
  return report;
}

double dissipativity_lhs(const ModelSpec& model, std::span<const double> x, const EmpiricalMeasure& u,
                         std::span<const double> y, const EmpiricalMeasure& v, double p) {
  const Coefficients a = evaluate_all(model, x, u);
  const Coefficients b = evaluate_all(model, y, v);
  double inner = 0.0;
  for (std::size_t k = 0; k < model.dim; ++k) inner += (x[k] - y[k]) * (a.drift[k] - b.drift[k]);
  double diff = 0.0;
  for (std::size_t e = 0; e < a.g.data.size(); ++e) {
    const double dg = a.g.data[e] - b.g.data[e];
    diff += dg * dg;
  }
  for (std::size_t e = 0; e < a.g0.data.size(); ++e) {
    const double dg = a.g0.data[e] - b.g0.data[e];
    diff += dg * dg;
  }
  return 2.0 * inner + (p - 1.0) * diff;
}

DissipativityReport check_dissipativity(const ModelSpec& model, const std::vector<DissipativitySample>& samples,
                                        double p) {
  DissipativityReport report;
  report.p = p;
  const double c3 = model.constants.c3;
  const double c4 = model.constants.c4;
  // normal equations for LHS ~ theta1 * (-a) + theta2 * b
  double saa = 0.0, sab = 0.0, sbb = 0.0, sla = 0.0, slb = 0.0;
  double c5 = 0.0;
  bool any_violation = false;
  report.max_excess = -std::numeric_limits<double>::infinity();

  auto one_point_bound = [&](std::span<const double> x, const EmpiricalMeasure& u) {
    const Coefficients c = evaluate_all(model, x, u);
    double inner = 0.0;
    for (std::size_t k = 0; k < model.dim; ++k) inner += x[k] * c.drift[k];
    const double lhs = 2.0 * inner + (p - 1.0) * (sq_norm(c.g.data) + sq_norm(c.g0.data));
    return lhs + c3 * sq_norm(x) - c4 * second_moment(u);
  };

  for (const auto& s : samples) {
    if (s.x.size() != model.dim || s.y.size() != model.dim)
      throw DimensionMismatchError("check_dissipativity: state dimension does not match the model");
    const double w2sq = transport_cost(s.u, s.v, 2.0);
    double a = 0.0;
    for (std::size_t k = 0; k < model.dim; ++k) a += (s.x[k] - s.y[k]) * (s.x[k] - s.y[k]);
    if (a == 0.0 && w2sq == 0.0) {
      ++report.skipped;
      continue;
    }
    const double lhs = dissipativity_lhs(model, s.x, s.u, s.y, s.v, p);
    const double rhs = -c3 * a + c4 * w2sq;
    const double excess = lhs - rhs;
    report.max_excess = std::max(report.max_excess, excess);
    if (excess > kAssumptionSlack) any_violation = true;
    saa += a * a;
    sab += -a * w2sq;
    sbb += w2sq * w2sq;
    sla += -lhs * a;
    slb += lhs * w2sq;
    c5 = std::max({c5, one_point_bound(s.x, s.u), one_point_bound(s.y, s.v)});
    ++report.checked;
  }
  if (report.checked == 0) report.max_excess = 0.0;

  const double det = saa * sbb - sab * sab;
  if (report.checked > 0 && std::fabs(det) > 1e-12 * std::max(1.0, saa * sbb)) {
    report.fitted_c3 = (sla * sbb - slb * sab) / det;
    report.fitted_c4 = (saa * slb - sab * sla) / det;
  } else if (saa > 0.0) {
    report.fitted_c3 = sla / saa;
    report.fitted_c4 = 0.0;
  }
  report.fitted_c5 = c5;
  report.pass = !any_violation;
  return report;
}

}  // namespace mvcn
