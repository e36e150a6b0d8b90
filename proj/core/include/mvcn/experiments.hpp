#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mvcn/csv_io.hpp"
#include "mvcn/model.hpp"
#include "mvcn/report.hpp"
#include "mvcn/simulate.hpp"
#include "mvcn/stats.hpp"

namespace mvcn {

// ---------------------------------------------------------------------------
// Propagation-of-chaos rate eps_N

enum class EpsCase {
  AboveHalfDim,  // q > d/2:  N^(-1/2) + N^(-(p-q)/p)
  AtHalfDim,     // q = d/2:  N^(-1/2) log(1 + N) + N^(-(p-q)/p)
  BelowHalfDim,  // q < d/2:  N^(-q/d) + N^(-(p-q)/p)
};

/// Throws InvalidArgumentError naming the violated constraint: 2 <= q < p,
/// p != 2q when q >= d/2, p != d/(d-q) when q < d/2.
EpsCase eps_case(std::size_t d, double p, double q);
double eps_n(std::size_t d, double p, double q, double n);
/// Least-squares slope of log eps_N against log N.
double eps_slope(std::size_t d, double p, double q, std::span<const double> n_values);

/// Least-squares fit of log(y) against x over the points with y > 0.
LinearFit fit_log(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Verdict logic. Each function reads only the experiment's CSV table and the
// tolerances stored in report.json, so verdicts can be recomputed from disk.

using Tolerances = std::map<std::string, double>;

struct VerdictOutcome {
  Verdict verdict = Verdict::Inconclusive;
  std::map<std::string, double> fitted;
  std::vector<std::string> notes;
};

/// moments.csv; tolerances burn_in, trend_sigmas.
VerdictOutcome moment_bound_verdict(const Table& moments, const Tolerances& tol);
/// gap.csv; tolerances p, c3, c4, rate_tolerance, noise_floor, min_efoldings.
VerdictOutcome contraction_verdict(const Table& gap, const Tolerances& tol);
/// invariant.csv / semigroup.csv; tolerances floor_factor, max_floor_fraction.
VerdictOutcome distance_table_verdict(const Table& rows, const Tolerances& tol);
/// poc.csv; tolerances slope_tolerance.
VerdictOutcome poc_verdict(const Table& poc, const Tolerances& tol);
/// converge.csv; tolerances floor_factor.
VerdictOutcome convergence_verdict(const Table& rows, const Tolerances& tol);

/// Re-derives the verdict of the experiment stored in `dir` from its
/// report.json tolerances and CSV series.
VerdictOutcome recompute_verdict(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Sampling floors

/// Mean over `splits` random halvings of the blocks (floor(M/2) blocks per
/// half) of the distance between the halves. `nested` selects the nested
/// distance between block families instead of W_p between pooled clouds.
/// NaN when M < 2.
double block_split_floor(const ParticleEnsemble& ens, double p, bool nested, std::size_t splits, std::uint64_t seed,
                         std::size_t max_pooled_points = kMaxExactPoints, std::size_t max_block_points = 64);

// ---------------------------------------------------------------------------
// Experiments. Each writes report.json and its CSV series into out_dir.

struct MomentBoundOptions {
  SimConfig sim;
  double burn_in = 1.0;
  double trend_sigmas = 3.0;
};

struct ContractionOptions {
  SimConfig sim;
  InitialLaw init_a;
  InitialLaw init_b;
  double p = 0.0;  // 0: model p
  double rate_tolerance = 0.25;
  double floor_factor = 10.0;
  double min_efoldings = 3.0;
  CoupledOptions coupling;
};

struct InvariantOptions {
  SimConfig sim;
  std::vector<InitialLaw> inits;
  double p = 0.0;
  double delta = 1.0;  // stationarity compares t_end - delta with t_end
  double floor_factor = 2.0;
  double max_floor_fraction = 0.5;  // inconclusive when floor >= this * spread
  std::size_t splits = 8;
  std::size_t max_pooled_points = kMaxExactPoints;
  std::size_t max_block_points = 64;
};

struct SemigroupOptions {
  SimConfig sim;  // sim.t_end is ignored; the run ends at t
  double s = 1.0;
  double t = 3.0;
  bool reuse_streams = false;
  double p = 0.0;
  double floor_factor = 2.0;
  double max_floor_fraction = 0.5;
  std::size_t splits = 8;
  std::size_t max_pooled_points = kMaxExactPoints;
  std::size_t max_block_points = 64;
};

struct PocOptions {
  SimConfig sim;  // sim.particles is ignored
  double q = 2.0;
  std::vector<std::size_t> n_list;
  std::size_t n_ref = 8192;
  double slope_tolerance = 0.15;
};

struct ConvergenceOptions {
  SimConfig sim;  // sim.particles is ignored
  double q = 2.0;
  std::vector<std::size_t> n_list;
  std::filesystem::path invariant_dir;
  double floor_factor = 2.0;
  std::size_t splits = 8;
  std::size_t max_pooled_points = kMaxExactPoints;
  std::size_t max_block_points = 64;
};

ExperimentReport run_moment_bound(const ModelSpec& model, const MomentBoundOptions& options,
                                  const std::filesystem::path& out_dir);
ExperimentReport run_contraction(const ModelSpec& model, const ContractionOptions& options,
                                 const std::filesystem::path& out_dir);
ExperimentReport run_invariant(const ModelSpec& model, const InvariantOptions& options,
                               const std::filesystem::path& out_dir);
ExperimentReport run_semigroup(const ModelSpec& model, const SemigroupOptions& options,
                               const std::filesystem::path& out_dir);
ExperimentReport run_poc(const ModelSpec& model, const PocOptions& options, const std::filesystem::path& out_dir);
ExperimentReport run_convergence_to_invariant(const ModelSpec& model, const ConvergenceOptions& options,
                                              const std::filesystem::path& out_dir);

}  // namespace mvcn
