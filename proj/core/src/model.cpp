#include "mvcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mvcn/error.hpp"
#include "mvcn/stats.hpp"

namespace mvcn {
namespace {

double int_power(double x, unsigned e) {
  double r = 1.0;
  for (unsigned i = 0; i < e; ++i) r *= x;
  return r;
}

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& what) {
  if (m.rows != rows || m.cols != cols) {
    std::ostringstream os;
    os << what << ": expected " << rows << "x" << cols << " matrix, got " << m.rows << "x" << m.cols;
    throw ModelDefinitionError(os.str());
  }
}

void validate_polynomial(const Polynomial& poly, std::size_t dim, const std::string& what) {
  for (const auto& t : poly.terms) {
    if (t.exponents.size() != dim)
      throw ModelDefinitionError(what + ": monomial exponent vector must have " + std::to_string(dim) + " entries");
    if (!std::isfinite(t.coeff)) throw ModelDefinitionError(what + ": non-finite coefficient");
  }
}

void validate_field(const AffineMatrixField& field, const ModelSpec& model, const std::string& what) {
  const std::size_t d = model.dim;
  require_shape(field.constant, d, d, what + ".constant");
  if (!field.linear.empty()) {
    if (field.linear.size() != d)
      throw ModelDefinitionError(what + ".linear: need one matrix per coordinate (" + std::to_string(d) + ")");
    for (const auto& m : field.linear) require_shape(m, d, d, what + ".linear");
  }
  for (const auto& term : field.terms) {
    if (term.functional >= model.functionals.size())
      throw ModelDefinitionError(what + ": mean-field term references unknown functional " +
                                 std::to_string(term.functional));
    const std::size_t k = model.functionals[term.functional].output_size();
    if (term.weights.size() != k)
      throw ModelDefinitionError(what + ": mean-field term needs " + std::to_string(k) + " weight matrices");
    for (const auto& m : term.weights) require_shape(m, d, d, what + ".mean_field");
  }
}

std::string describe_measure(const EmpiricalMeasure& u) {
  std::ostringstream os;
  os << "measure with " << u.size() << " points, first point (";
  for (std::size_t k = 0; k < u.dim(); ++k) os << (k ? ", " : "") << u.point(0)[k];
  os << ")";
  return os.str();
}

std::string describe_point(std::span<const double> x) {
  std::ostringstream os;
  os << "x = (";
  for (std::size_t k = 0; k < x.size(); ++k) os << (k ? ", " : "") << x[k];
  os << ")";
  return os.str();
}

Matrix zero_square(std::size_t d) { return Matrix(d, d); }

AffineMatrixField constant_field(const Matrix& c) { return AffineMatrixField{c, {}, {}}; }

Monomial mono(double coeff, std::vector<unsigned> exps) { return Monomial{coeff, std::move(exps)}; }

}  // namespace

const char* to_string(MeanFieldFunctional::Kind kind) {
  switch (kind) {
    case MeanFieldFunctional::Kind::ExpectationLinear:
      return "expectation_linear";
    case MeanFieldFunctional::Kind::W2ToDirac:
      return "w2_to_dirac";
    case MeanFieldFunctional::Kind::CustomMoment:
      return "custom_moment";
  }
  return "unknown";
}

void AssumptionConstants::validate() const {
  auto fail = [](const std::string& msg) { throw ModelDefinitionError("assumption constants: " + msg); };
  if (!(c1 > 0.0) || !(c2 > 0.0)) fail("c1 and c2 must be positive");
  if (!(c3 > 0.0) || !(c4 >= 0.0)) fail("c3 must be positive and c4 non-negative");
  if (!(c3 > c4)) fail("need c3 > c4");
  if (!(c5 >= 0.0)) fail("c5 must be non-negative");
  if (!(l >= 2.0)) fail("need l >= 2");
  if (!(p > 2.0)) fail("need p > 2");
  if (!(p > 0.5 * l)) fail("need p > l/2");
}

double Polynomial::evaluate(std::span<const double> x) const {
  double s = 0.0;
  for (const auto& t : terms) {
    double v = t.coeff;
    for (std::size_t k = 0; k < x.size(); ++k)
      if (t.exponents[k] != 0) v *= int_power(x[k], t.exponents[k]);
    s += v;
  }
  return s;
}

unsigned Polynomial::degree() const {
  unsigned deg = 0;
  for (const auto& t : terms) {
    unsigned total = 0;
    for (unsigned e : t.exponents) total += e;
    if (t.coeff != 0.0) deg = std::max(deg, total);
  }
  return deg;
}

bool AffineMatrixField::is_zero() const {
  if (!constant.is_zero()) return false;
  for (const auto& m : linear)
    if (!m.is_zero()) return false;
  for (const auto& t : terms)
    for (const auto& m : t.weights)
      if (!m.is_zero()) return false;
  return true;
}

void ModelSpec::validate() const {
  if (dim == 0) throw ModelDefinitionError("model '" + name + "': dimension must be >= 1");
  for (const auto& f : functionals) {
    switch (f.kind) {
      case MeanFieldFunctional::Kind::ExpectationLinear:
        if (f.matrix.rows == 0 || f.matrix.cols != dim)
          throw ModelDefinitionError("expectation_linear functional needs an r x " + std::to_string(dim) +
                                     " coefficient matrix");
        break;
      case MeanFieldFunctional::Kind::CustomMoment:
        validate_polynomial(f.phi, dim, "custom_moment");
        break;
      case MeanFieldFunctional::Kind::W2ToDirac:
        break;
    }
  }
  if (drift.components.size() != dim)
    throw ModelDefinitionError("drift must have " + std::to_string(dim) + " polynomial components, got " +
                               std::to_string(drift.components.size()));
  for (const auto& poly : drift.components) validate_polynomial(poly, dim, "drift");
  for (const auto& term : drift.terms) {
    if (term.functional >= functionals.size())
      throw ModelDefinitionError("drift mean-field term references unknown functional " +
                                 std::to_string(term.functional));
    require_shape(term.weights, dim, functionals[term.functional].output_size(), "drift.mean_field");
  }
  validate_field(diff_idio, *this, "diff_idio");
  validate_field(diff_common, *this, "diff_common");
  constants.validate();
}

std::size_t ModelSpec::feature_count() const {
  std::size_t total = 0;
  for (const auto& f : functionals) total += f.output_size();
  return total;
}

bool ModelSpec::measure_free() const {
  for (const auto& t : drift.terms)
    if (!t.weights.is_zero()) return false;
  for (const auto* field : {&diff_idio, &diff_common})
    for (const auto& t : field->terms)
      for (const auto& m : t.weights)
        if (!m.is_zero()) return false;
  return true;
}

unsigned ModelSpec::drift_degree() const {
  unsigned deg = 0;
  for (const auto& poly : drift.components) deg = std::max(deg, poly.degree());
  return deg;
}

void compute_features(const ModelSpec& model, std::span<const double> points, std::size_t n, std::span<double> out) {
  const std::size_t d = model.dim;
  thread_local std::vector<double> scratch;
  scratch.resize(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> means;  // filled lazily, shared by expectation functionals
  std::size_t offset = 0;
  for (const auto& f : model.functionals) {
    switch (f.kind) {
      case MeanFieldFunctional::Kind::ExpectationLinear: {
        if (means.empty()) {
          means.resize(d);
          for (std::size_t k = 0; k < d; ++k) {
            if (d == 1) {
              means[k] = reproducible_sum(points.first(n)) / static_cast<double>(n);
              continue;
            }
            for (std::size_t i = 0; i < n; ++i) scratch[i] = points[i * d + k];
            means[k] = reproducible_sum(scratch) / static_cast<double>(n);
          }
        }
        for (std::size_t r = 0; r < f.matrix.rows; ++r) {
          double v = 0.0;
          for (std::size_t k = 0; k < d; ++k) v += f.matrix(r, k) * means[k];
          out[offset + r] = v;
        }
        break;
      }
      case MeanFieldFunctional::Kind::W2ToDirac: {
        for (std::size_t i = 0; i < n; ++i) {
          double sq = 0.0;
          for (std::size_t k = 0; k < d; ++k) {
            const double c = points[i * d + k] - 0.0;
            sq += c * c;
          }
          scratch[i] = sq;
        }
        out[offset] = std::sqrt(reproducible_sum(scratch) / static_cast<double>(n));
        break;
      }
      case MeanFieldFunctional::Kind::CustomMoment: {
        for (std::size_t i = 0; i < n; ++i) scratch[i] = f.phi.evaluate(points.subspan(i * d, d));
        out[offset] = reproducible_sum(scratch) * inv_n;
        break;
      }
    }
    offset += f.output_size();
  }
}

std::vector<double> compute_features(const ModelSpec& model, const EmpiricalMeasure& u) {
  if (u.dim() != model.dim)
    throw DimensionMismatchError("measure dimension " + std::to_string(u.dim()) + " does not match model dimension " +
                                 std::to_string(model.dim));
  std::vector<double> out(model.feature_count());
  if (u.uniform()) {
    compute_features(model, u.points(), u.size(), out);
    return out;
  }
  // Weighted measures: accumulate weighted values directly.
  const std::size_t d = model.dim;
  std::vector<double> terms(u.size());
  std::size_t offset = 0;
  for (const auto& f : model.functionals) {
    switch (f.kind) {
      case MeanFieldFunctional::Kind::ExpectationLinear:
        for (std::size_t r = 0; r < f.matrix.rows; ++r) {
          for (std::size_t i = 0; i < u.size(); ++i) {
            double v = 0.0;
            for (std::size_t k = 0; k < d; ++k) v += f.matrix(r, k) * u.point(i)[k];
            terms[i] = u.weight(i) * v;
          }
          out[offset + r] = reproducible_sum(terms);
        }
        break;
      case MeanFieldFunctional::Kind::W2ToDirac: {
        const std::vector<double> origin(d, 0.0);
        out[offset] = wasserstein_to_dirac(u, origin, 2.0);
        break;
      }
      case MeanFieldFunctional::Kind::CustomMoment:
        for (std::size_t i = 0; i < u.size(); ++i) terms[i] = u.weight(i) * f.phi.evaluate(u.point(i));
        out[offset] = reproducible_sum(terms);
        break;
    }
    offset += f.output_size();
  }
  return out;
}

std::size_t feature_offset(const ModelSpec& model, std::size_t functional) {
  std::size_t offset = 0;
  for (std::size_t f = 0; f < functional; ++f) offset += model.functionals[f].output_size();
  return offset;
}

namespace {

void field_base(const ModelSpec& model, const AffineMatrixField& field, std::span<const double> features,
                std::vector<double>& base) {
  const std::size_t dd = model.dim * model.dim;
  base.assign(field.constant.data.begin(), field.constant.data.end());
  base.resize(dd, 0.0);
  for (const auto& term : field.terms) {
    const std::size_t offset = feature_offset(model, term.functional);
    for (std::size_t j = 0; j < term.weights.size(); ++j) {
      const auto& w = term.weights[j].data;
      const double v = features[offset + j];
      for (std::size_t e = 0; e < dd; ++e) base[e] += w[e] * v;
    }
  }
}

}  // namespace

void freeze_coefficients(const ModelSpec& model, std::span<const double> features, FrozenCoefficients& out) {
  const std::size_t d = model.dim;
  out.drift_shift.assign(d, 0.0);
  for (const auto& term : model.drift.terms) {
    const std::size_t offset = feature_offset(model, term.functional);
    const Matrix& w = term.weights;
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t j = 0; j < w.cols; ++j) out.drift_shift[k] += w(k, j) * features[offset + j];
  }
  field_base(model, model.diff_idio, features, out.idio_base);
  field_base(model, model.diff_common, features, out.common_base);
}

void apply_drift(const ModelSpec& model, std::span<const double> drift_shift, std::span<const double> x,
                 std::span<double> out) {
  for (std::size_t k = 0; k < model.dim; ++k) out[k] = model.drift.components[k].evaluate(x) + drift_shift[k];
}

void apply_diffusion(const AffineMatrixField& field, std::span<const double> base, std::span<const double> x,
                     std::span<double> out) {
  std::copy(base.begin(), base.end(), out.begin());
  for (std::size_t k = 0; k < field.linear.size(); ++k) {
    const auto& lin = field.linear[k].data;
    for (std::size_t e = 0; e < base.size(); ++e) out[e] += lin[e] * x[k];
  }
}

void eval_drift(const ModelSpec& model, std::span<const double> x, std::span<const double> features,
                std::span<double> out) {
  FrozenCoefficients frozen;
  freeze_coefficients(model, features, frozen);
  apply_drift(model, frozen.drift_shift, x, out);
}

void eval_diffusion(const ModelSpec& model, const AffineMatrixField& field, std::span<const double> x,
                    std::span<const double> features, std::span<double> out) {
  std::vector<double> base;
  field_base(model, field, features, base);
  apply_diffusion(field, base, x, out);
}

namespace {

void check_finite(std::span<const double> values, std::span<const double> x, const EmpiricalMeasure& u,
                  const char* what) {
  for (double v : values)
    if (!std::isfinite(v))
      throw NumericOverflowError(std::string(what) + " is not finite at " + describe_point(x) + " and " +
                                 describe_measure(u));
}

void check_args(const ModelSpec& model, std::span<const double> x, const EmpiricalMeasure& u) {
  if (x.size() != model.dim || u.dim() != model.dim)
    throw DimensionMismatchError("model '" + model.name + "' has dimension " + std::to_string(model.dim) +
                                 ", got state of size " + std::to_string(x.size()) + " and measure of dimension " +
                                 std::to_string(u.dim()));
}

Matrix diffusion_eval(const ModelSpec& model, const AffineMatrixField& field, std::span<const double> x,
                      const EmpiricalMeasure& u, const char* what) {
  check_args(model, x, u);
  const auto features = compute_features(model, u);
  Matrix out(model.dim, model.dim);
  eval_diffusion(model, field, x, features, out.data);
  check_finite(out.data, x, u, what);
  return out;
}

}  // namespace

std::vector<double> drift_eval(const ModelSpec& model, std::span<const double> x, const EmpiricalMeasure& u) {
  check_args(model, x, u);
  const auto features = compute_features(model, u);
  std::vector<double> out(model.dim);
  eval_drift(model, x, features, out);
  check_finite(out, x, u, "drift");
  return out;
}

Matrix diffusion_idio_eval(const ModelSpec& model, std::span<const double> x, const EmpiricalMeasure& u) {
  return diffusion_eval(model, model.diff_idio, x, u, "idiosyncratic diffusion");
}

Matrix diffusion_common_eval(const ModelSpec& model, std::span<const double> x, const EmpiricalMeasure& u) {
  return diffusion_eval(model, model.diff_common, x, u, "common diffusion");
}

// ---------------------------------------------------------------------------

ModelSpec anharmonic1d(const AnharmonicParams& prm) {
  ModelSpec m;
  m.name = "anharmonic1d";
  m.dim = 1;
  m.functionals = {MeanFieldFunctional::mean(1)};
  m.drift.components = {Polynomial{{mono(-1.0, {3}), mono(1.0 - prm.beta2, {1})}}};
  m.drift.terms = {DriftMeanFieldTerm{0, Matrix(1, 1, prm.beta2 * prm.beta3)}};
  m.diff_idio = constant_field(Matrix(1, 1, prm.sigma));
  m.diff_common = AffineMatrixField{zero_square(1), {Matrix(1, 1, prm.beta1)}, {}};

  const double b23 = prm.beta2 * prm.beta3;
  const double one_minus_b2 = 1.0 - prm.beta2;
  m.constants.c1 = 3.0 * std::max({1.0, one_minus_b2 * one_minus_b2, b23 * b23});
  m.constants.c2 = std::max(prm.sigma * prm.sigma, prm.beta1 * prm.beta1);
  m.constants.l = 6.0;
  m.constants.c3 = -2.0 * one_minus_b2 - 5.0 * prm.beta1 * prm.beta1 - b23;
  m.constants.c4 = b23;
  m.constants.p = prm.p;
  return m;
}

ModelSpec cubic2d() {
  ModelSpec m;
  m.name = "cubic2d";
  m.dim = 2;
  m.functionals = {MeanFieldFunctional::mean(2)};
  m.drift.components = {
      Polynomial{{mono(-2.0, {1, 0}), mono(-1.0, {3, 0})}},
      Polynomial{{mono(-2.0, {0, 1}), mono(1.0, {1, 0}), mono(-1.0, {0, 3})}},
  };
  m.drift.terms = {DriftMeanFieldTerm{0, Matrix::identity(2, 0.5)}};

  // g = 1/2 diag(1 - x1, 1 - x2)
  Matrix lin_x1(2, 2), lin_x2(2, 2);
  lin_x1(0, 0) = -0.5;
  lin_x2(1, 1) = -0.5;
  m.diff_idio = AffineMatrixField{Matrix::identity(2, 0.5), {lin_x1, lin_x2}, {}};

  // g0 = 1/4 diag(-x1 + m1, -x2 + m2)
  Matrix c_x1(2, 2), c_x2(2, 2), c_m1(2, 2), c_m2(2, 2);
  c_x1(0, 0) = -0.25;
  c_x2(1, 1) = -0.25;
  c_m1(0, 0) = 0.25;
  c_m2(1, 1) = 0.25;
  m.diff_common = AffineMatrixField{zero_square(2), {c_x1, c_x2}, {DiffusionMeanFieldTerm{0, {c_m1, c_m2}}}};

  m.constants.c1 = 16.0;
  m.constants.c2 = 1.0;
  m.constants.l = 6.0;
  m.constants.c3 = 11.0 / 8.0;
  m.constants.c4 = 5.0 / 8.0;
  m.constants.p = 4.0;
  return m;
}

ModelSpec ou_meanfield(const OuParams& prm) {
  ModelSpec m;
  m.name = "ou_meanfield";
  m.dim = 1;
  m.functionals = {MeanFieldFunctional::mean(1)};
  m.drift.components = {Polynomial{{mono(-prm.a, {1})}}};
  m.drift.terms = {DriftMeanFieldTerm{0, Matrix(1, 1, prm.a * prm.b)}};
  m.diff_idio = constant_field(Matrix(1, 1, prm.sigma));
  m.diff_common = constant_field(Matrix(1, 1, prm.sigma0));
  // |f|^2 <= 2a^2 (x^2 + b^2 m^2); Young on the cross term gives the pair below.
  m.constants.c1 = 2.0 * prm.a * prm.a * std::max(1.0, prm.b * prm.b);
  m.constants.c2 = prm.sigma * prm.sigma + prm.sigma0 * prm.sigma0;
  m.constants.l = 2.0;
  m.constants.c3 = 2.0 * prm.a - prm.a * std::fabs(prm.b);
  m.constants.c4 = prm.a * std::fabs(prm.b);
  m.constants.p = 4.0;
  return m;
}

ModelSpec zero_model(std::size_t dim) {
  ModelSpec m;
  m.name = "zero";
  m.dim = dim;
  m.drift.components.assign(dim, Polynomial{});
  m.diff_idio = constant_field(zero_square(dim));
  m.diff_common = constant_field(zero_square(dim));
  m.constants = AssumptionConstants{1.0, 1.0, 1.0, 0.0, 0.0, 2.0, 4.0};
  return m;
}

ModelSpec brownian_model(std::size_t dim) {
  ModelSpec m = zero_model(dim);
  m.name = "brownian";
  m.diff_idio = constant_field(Matrix::identity(dim));
  m.diff_common = constant_field(Matrix::identity(dim));
  // Placeholder constants: this model violates dissipativity and serves as a
  // negative control.
  m.constants = AssumptionConstants{1.0, 2.0, 1.0, 0.0, 0.0, 2.0, 4.0};
  return m;
}

std::vector<std::string> builtin_model_names() { return {"anharmonic1d", "cubic2d", "ou_meanfield", "zero", "brownian"}; }

ModelSpec builtin_model(const std::string& name, const std::map<std::string, double>& params) {
  std::map<std::string, double> rest = params;
  auto take = [&rest](const char* key, double fallback) {
    auto it = rest.find(key);
    if (it == rest.end()) return fallback;
    const double v = it->second;
    rest.erase(it);
    return v;
  };
  auto take_dim = [&](std::size_t fallback) {
    const double v = take("dim", static_cast<double>(fallback));
    if (!(v >= 1.0) || v != std::floor(v)) throw ModelDefinitionError("dim must be a positive integer");
    return static_cast<std::size_t>(v);
  };

  ModelSpec m;
  if (name == "anharmonic1d") {
    AnharmonicParams prm;
    prm.beta1 = take("beta1", prm.beta1);
    prm.beta2 = take("beta2", prm.beta2);
    prm.beta3 = take("beta3", prm.beta3);
    prm.sigma = take("sigma", prm.sigma);
    prm.p = take("p", prm.p);
    m = anharmonic1d(prm);
  } else if (name == "cubic2d") {
    m = cubic2d();
  } else if (name == "ou_meanfield") {
    OuParams prm;
    prm.a = take("a", prm.a);
    prm.b = take("b", prm.b);
    prm.sigma = take("sigma", prm.sigma);
    prm.sigma0 = take("sigma0", prm.sigma0);
    m = ou_meanfield(prm);
  } else if (name == "zero") {
    m = zero_model(take_dim(1));
  } else if (name == "brownian") {
    m = brownian_model(take_dim(1));
  } else {
    std::string names;
    for (const auto& n : builtin_model_names()) names += (names.empty() ? "" : ", ") + n;
    throw ModelDefinitionError("unknown model '" + name + "'; builtin models: " + names);
  }

  m.constants.c1 = take("c1", m.constants.c1);
  m.constants.c2 = take("c2", m.constants.c2);
  m.constants.c3 = take("c3", m.constants.c3);
  m.constants.c4 = take("c4", m.constants.c4);
  m.constants.c5 = take("c5", m.constants.c5);
  m.constants.l = take("l", m.constants.l);
  m.constants.p = take("p", m.constants.p);
  if (!rest.empty()) throw ModelDefinitionError("model '" + name + "' has no parameter '" + rest.begin()->first + "'");
  m.validate();
  return m;
}

double ou_stationary_variance(const OuParams& prm) {
  return prm.sigma * prm.sigma / (2.0 * prm.a) + ou_block_mean_variance(prm);
}

double ou_block_mean_variance(const OuParams& prm) {
  return prm.sigma0 * prm.sigma0 / (2.0 * prm.a * (1.0 - prm.b));
}

}  // namespace mvcn
