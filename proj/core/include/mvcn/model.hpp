#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mvcn/matrix.hpp"
#include "mvcn/measure.hpp"

namespace mvcn {

/// Growth (c1, c2, l), dissipativity (c3 > c4, moment order p) and the
/// one-sided bound constant c5 of a model.
struct AssumptionConstants {
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;
  double c4 = 0.0;
  double c5 = 0.0;  // 0 means "not declared"; the checker fits it
  double l = 2.0;
  double p = 4.0;

  /// Throws ModelDefinitionError unless c1, c2, c3 > 0, c4 >= 0, c3 > c4,
  /// l >= 2, p > 2 and p > l / 2.
  void validate() const;

  /// (c3 - c4) / 2: exponential rate of the law-couple contraction.
  double law_rate() const { return 0.5 * (c3 - c4); }
  /// p (c3 - c4) / 2: rate of the pathwise p-th power gap.
  double pathwise_rate() const { return 0.5 * p * (c3 - c4); }

  friend bool operator==(const AssumptionConstants&, const AssumptionConstants&) = default;
};

struct Monomial {
  double coeff = 0.0;
  std::vector<unsigned> exponents;  // one per coordinate

  friend bool operator==(const Monomial&, const Monomial&) = default;
};

/// Real polynomial on R^d, a sum of monomials.
struct Polynomial {
  std::vector<Monomial> terms;

  double evaluate(std::span<const double> x) const;
  unsigned degree() const;

  friend bool operator==(const Polynomial&, const Polynomial&) = default;
};

/// Scalar or vector summary of a measure that a coefficient may depend on.
struct MeanFieldFunctional {
  enum class Kind {
    ExpectationLinear,  // A * int z u(dz); output size = rows of A
    W2ToDirac,          // W_2(u, delta_0); output size 1
    CustomMoment,       // int phi(z) u(dz), phi polynomial; output size 1
  };

  Kind kind = Kind::ExpectationLinear;
  Matrix matrix;     // ExpectationLinear only (r x d)
  Polynomial phi;    // CustomMoment only

  std::size_t output_size() const { return kind == Kind::ExpectationLinear ? matrix.rows : 1; }

  static MeanFieldFunctional mean(std::size_t dim) { return {Kind::ExpectationLinear, Matrix::identity(dim), {}}; }

  friend bool operator==(const MeanFieldFunctional&, const MeanFieldFunctional&) = default;
};

const char* to_string(MeanFieldFunctional::Kind kind);

/// Term contributing weights * value(functional) to a drift.
struct DriftMeanFieldTerm {
  std::size_t functional = 0;
  Matrix weights;  // d x output_size

  friend bool operator==(const DriftMeanFieldTerm&, const DriftMeanFieldTerm&) = default;
};

/// Term contributing sum_k value_k * weights[k] to a diffusion matrix.
struct DiffusionMeanFieldTerm {
  std::size_t functional = 0;
  std::vector<Matrix> weights;  // output_size matrices of shape d x d

  friend bool operator==(const DiffusionMeanFieldTerm&, const DiffusionMeanFieldTerm&) = default;
};

/// f(x, u) = (p_1(x), ..., p_d(x)) + sum of mean-field terms.
struct DriftField {
  std::vector<Polynomial> components;
  std::vector<DriftMeanFieldTerm> terms;

  friend bool operator==(const DriftField&, const DriftField&) = default;
};

/// Affine matrix field g(x, u) = C + sum_k x_k L_k + mean-field terms.
struct AffineMatrixField {
  Matrix constant;
  std::vector<Matrix> linear;  // empty, or one d x d matrix per coordinate
  std::vector<DiffusionMeanFieldTerm> terms;

  bool is_zero() const;

  friend bool operator==(const AffineMatrixField&, const AffineMatrixField&) = default;
};

/// Declarative MV-SDE with common noise:
///   dX = f(X, L1(X)) dt + g(X, L1(X)) dB + g0(X, L1(X)) dB0.
struct ModelSpec {
  std::string name;
  std::size_t dim = 1;
  std::vector<MeanFieldFunctional> functionals;
  DriftField drift;
  AffineMatrixField diff_idio;
  AffineMatrixField diff_common;
  AssumptionConstants constants;

  /// Throws ModelDefinitionError on any shape or constant inconsistency.
  void validate() const;

  /// Total length of the flattened functional-value vector.
  std::size_t feature_count() const;
  bool measure_free() const;
  unsigned drift_degree() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Flattened values of every functional of `model` on the uniform point
/// cloud `points` (n x d row-major). Sums are order-independent, so the
/// result is bitwise invariant under permutations of the points.
void compute_features(const ModelSpec& model, std::span<const double> points, std::size_t n, std::span<double> out);

std::vector<double> compute_features(const ModelSpec& model, const EmpiricalMeasure& u);

/// Measure-dependent parts of the coefficients for one feature vector, so
/// that f(x, u) = poly(x) + drift_shift and g(x, u) = base + sum_k x_k L_k.
/// The particle engine freezes these once per block and step.
struct FrozenCoefficients {
  std::vector<double> drift_shift;  // d
  std::vector<double> idio_base;    // d x d, row-major
  std::vector<double> common_base;  // d x d, row-major
};

void freeze_coefficients(const ModelSpec& model, std::span<const double> features, FrozenCoefficients& out);
void apply_drift(const ModelSpec& model, std::span<const double> drift_shift, std::span<const double> x,
                 std::span<double> out);
void apply_diffusion(const AffineMatrixField& field, std::span<const double> base, std::span<const double> x,
                     std::span<double> out);

/// Drift with precomputed features; `out` has size d.
void eval_drift(const ModelSpec& model, std::span<const double> x, std::span<const double> features,
                std::span<double> out);

/// Diffusion matrix (row-major d x d) with precomputed features.
void eval_diffusion(const ModelSpec& model, const AffineMatrixField& field, std::span<const double> x,
                    std::span<const double> features, std::span<double> out);

/// Index of the first flattened feature produced by functional `functional`.
std::size_t feature_offset(const ModelSpec& model, std::size_t functional);

/// f(x, u). Throws DimensionMismatchError on shape errors and
/// NumericOverflowError when the result is not finite.
std::vector<double> drift_eval(const ModelSpec& model, std::span<const double> x, const EmpiricalMeasure& u);
Matrix diffusion_idio_eval(const ModelSpec& model, std::span<const double> x, const EmpiricalMeasure& u);
Matrix diffusion_common_eval(const ModelSpec& model, std::span<const double> x, const EmpiricalMeasure& u);

// ---------------------------------------------------------------------------
// Builtin models

struct AnharmonicParams {
  double beta1 = 0.5;
  double beta2 = 3.0;
  double beta3 = 0.25;
  double sigma = 2.0;
  double p = 4.0;
};

struct OuParams {
  double a = 1.0;
  double b = 0.5;
  double sigma = 0.5;
  double sigma0 = 0.5;
};

/// dX = (-X^3 + (1 - b2) X + b2 b3 E1[X]) dt + sigma dB + b1 X dB0.
ModelSpec anharmonic1d(const AnharmonicParams& params = {});
/// Two-dimensional cubic model with mean attraction and affine diffusions.
ModelSpec cubic2d();
/// dX = -a (X - b E1[X]) dt + sigma dB + sigma0 dB0.
ModelSpec ou_meanfield(const OuParams& params = {});
/// f = g = g0 = 0.
ModelSpec zero_model(std::size_t dim = 1);
/// f = 0, g = g0 = I: no invariant measure.
ModelSpec brownian_model(std::size_t dim = 1);

std::vector<std::string> builtin_model_names();

/// Builds a builtin by name with optional numeric overrides (e.g. "beta1",
/// "a", "p"). Throws ModelDefinitionError for unknown names or parameters.
ModelSpec builtin_model(const std::string& name, const std::map<std::string, double>& params = {});

/// Stationary variance of ou_meanfield: sigma^2/(2a) + sigma0^2/(2a(1-b)).
double ou_stationary_variance(const OuParams& params);
/// Stationary variance of the conditional mean: sigma0^2/(2a(1-b)).
double ou_block_mean_variance(const OuParams& params);

}  // namespace mvcn
