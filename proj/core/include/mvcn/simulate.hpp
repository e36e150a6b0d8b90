#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mvcn/error.hpp"
#include "mvcn/matrix.hpp"
#include "mvcn/measure.hpp"
#include "mvcn/model.hpp"
#include "mvcn/rng.hpp"

namespace mvcn {

// ---------------------------------------------------------------------------
// Initial laws

/// Law of the initial condition. Mini-language:
///   point:x1,...,xd        (a single value is broadcast to every coordinate)
///   gauss:m,s              (N(m, s^2) independently in every coordinate)
///   gauss:m1,...,md,s      (per-coordinate means)
///   gaussian:m1..md;c11,c12,...,cdd   (full covariance, row-major)
///   csv:PATH               (resampled from a point file; used in order when
///                           the file has exactly blocks*particles rows)
class InitialLaw {
 public:
  struct Point {
    std::vector<double> x;
  };
  struct Gaussian {
    std::vector<double> mean;
    Matrix cov;
    Matrix chol;  // lower Cholesky factor of cov
  };
  struct Sample {
    std::shared_ptr<const EmpiricalMeasure> measure;
    std::string path;
  };

  InitialLaw() : law_(Point{{0.0}}) {}

  static InitialLaw point(std::vector<double> x);
  static InitialLaw gaussian(std::vector<double> mean, const Matrix& cov);
  static InitialLaw isotropic_gaussian(std::vector<double> mean, double sd);
  static InitialLaw sample(EmpiricalMeasure measure, std::string path = {});

  /// Parses the mini-language; scalars broadcast to `dim` coordinates.
  static InitialLaw parse(const std::string& spec, std::size_t dim);

  /// Canonical spec string; parse(to_string(), dim) reproduces the law.
  std::string to_string() const;

  /// Dimension of the law; 0 when it broadcasts (scalar point / gauss).
  std::size_t dim() const;

  /// Draws one state for the particle owning initial stream `stream`.
  /// `flat_index` / `total` select rows in order for full-size samples.
  void draw(const NoiseStream& stream, std::size_t flat_index, std::size_t total, std::span<double> out) const;

  const auto& variant() const { return law_; }

 private:
  std::variant<Point, Gaussian, Sample> law_;
};

// ---------------------------------------------------------------------------
// Particle ensembles

/// M blocks x N particles x d coordinates plus the simulation clock.
/// Particles of a block share one common-noise stream (addressed by
/// block_ids()[b]); each particle owns an idiosyncratic stream addressed by
/// stream_ids()[b * N + i].
class ParticleEnsemble {
 public:
  ParticleEnsemble() = default;
  ParticleEnsemble(std::size_t blocks, std::size_t per_block, std::size_t dim);

  std::size_t blocks() const { return blocks_; }
  std::size_t particles_per_block() const { return per_block_; }
  std::size_t dim() const { return dim_; }
  std::size_t total_particles() const { return blocks_ * per_block_; }

  std::span<double> block_states(std::size_t b) {
    return {states_.data() + b * per_block_ * dim_, per_block_ * dim_};
  }
  std::span<const double> block_states(std::size_t b) const {
    return {states_.data() + b * per_block_ * dim_, per_block_ * dim_};
  }
  std::span<double> particle(std::size_t b, std::size_t i) {
    return {states_.data() + (b * per_block_ + i) * dim_, dim_};
  }
  std::span<const double> particle(std::size_t b, std::size_t i) const {
    return {states_.data() + (b * per_block_ + i) * dim_, dim_};
  }

  std::vector<double>& states() { return states_; }
  const std::vector<double>& states() const { return states_; }
  std::vector<std::uint32_t>& stream_ids() { return stream_ids_; }
  const std::vector<std::uint32_t>& stream_ids() const { return stream_ids_; }
  std::vector<std::uint32_t>& block_ids() { return block_ids_; }
  const std::vector<std::uint32_t>& block_ids() const { return block_ids_; }

  double time = 0.0;
  /// Noise counter of the next step.
  std::uint64_t step = 0;

  /// Uniform empirical measure of block b (first max_points particles).
  EmpiricalMeasure block_measure(std::size_t b, std::size_t max_points = SIZE_MAX) const;
  /// All particles, or max_points/M leading particles of every block.
  EmpiricalMeasure pooled_measure(std::size_t max_points = SIZE_MAX) const;
  MeasureEnsemble block_family(std::size_t max_points_per_block = SIZE_MAX) const;

  friend bool operator==(const ParticleEnsemble&, const ParticleEnsemble&) = default;

 private:
  std::size_t blocks_ = 0;
  std::size_t per_block_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> states_;
  std::vector<std::uint32_t> stream_ids_;
  std::vector<std::uint32_t> block_ids_;
};

// ---------------------------------------------------------------------------
// Configuration and records

struct SimConfig {
  double dt = 1e-3;
  double t_start = 0.0;
  double t_end = 1.0;
  std::size_t particles = 1000;  // N, per block
  std::size_t blocks = 1;        // M
  std::uint64_t seed = 1;
  bool taming = true;
  std::size_t record_every = 100;  // steps between moment records
  double snapshot_every = 0.0;     // time between full snapshots; 0 = first and last only
  std::vector<double> snapshot_times;
  InitialLaw initial_law;
  double moment_p = 0.0;  // 0: use the model's p
  std::size_t track = 0;  // particles per block written to paths.csv
  unsigned threads = 1;
  std::uint64_t step_offset = 0;  // noise counter of the first step

  /// Throws ConfigError on invalid values.
  void validate() const;
  std::uint64_t total_steps() const;
};

struct StepParams {
  enum class Noise { Philox, Zero };
  double dt = 1e-3;
  bool taming = true;
  std::uint64_t seed = 1;
  Noise noise = Noise::Philox;
};

struct MomentRow {
  double t = 0.0;
  double p = 0.0;
  double moment = 0.0;
  double std_error = 0.0;
};

struct BlockStatRow {
  double t = 0.0;
  std::uint32_t block = 0;
  std::vector<double> mean;
  double second_moment = 0.0;
};

struct PathRow {
  double t = 0.0;
  std::uint32_t block = 0;
  std::uint32_t particle = 0;
  std::vector<double> x;
};

struct ObservableRow {
  double t = 0.0;
  double mean_cos = 0.0;  // pooled mean of cos(x1)
  double mean_x1 = 0.0;
};

struct TrajectoryRecord {
  double p = 0.0;
  std::vector<MomentRow> moments;
  std::vector<BlockStatRow> block_stats;
  std::vector<ParticleEnsemble> snapshots;
  std::vector<PathRow> paths;
  std::vector<ObservableRow> observables;
  ParticleEnsemble final_state;
  std::vector<std::string> warnings;
};

/// A state became non-finite. Carries the record accumulated before the
/// failing interval.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, std::size_t block, std::size_t particle, double time,
              std::shared_ptr<const TrajectoryRecord> partial = nullptr)
      : Error(what), block_(block), particle_(particle), time_(time), partial_(std::move(partial)) {}

  std::size_t block() const { return block_; }
  std::size_t particle() const { return particle_; }
  double time() const { return time_; }
  const TrajectoryRecord* partial() const { return partial_.get(); }
  void attach(std::shared_ptr<const TrajectoryRecord> partial) { partial_ = std::move(partial); }

 private:
  std::size_t block_;
  std::size_t particle_;
  double time_;
  std::shared_ptr<const TrajectoryRecord> partial_;
};

// ---------------------------------------------------------------------------
// Engine

/// M x N particles drawn i.i.d. from cfg.initial_law, each from its own
/// initial stream at counter 0.
ParticleEnsemble initialize_ensemble(const ModelSpec& model, const SimConfig& cfg);

/// One Euler-Maruyama step for every block:
///   x <- x + f~ dt + g sqrt(dt) xi_i + g0 sqrt(dt) xi0_b
/// where the coefficients read the block's empirical measure, xi0_b is shared
/// by the block and f~ = f / (1 + dt |f|) when taming.
void em_step(ParticleEnsemble& ens, const ModelSpec& model, const StepParams& params, unsigned threads = 1);

/// `steps` consecutive em_steps; blocks are independent work units and the
/// result does not depend on `threads`.
void advance(ParticleEnsemble& ens, const ModelSpec& model, const StepParams& params, std::uint64_t steps,
             unsigned threads = 1);

TrajectoryRecord simulate(const ModelSpec& model, const SimConfig& cfg);

/// Continues from `start` (its clock and noise counter) up to cfg.t_end.
TrajectoryRecord simulate_from(const ModelSpec& model, const SimConfig& cfg, ParticleEnsemble start);

// ---------------------------------------------------------------------------
// Synchronous coupling

struct CoupledOptions {
  double p = 0.0;                                // 0: model's p
  std::size_t max_pooled_points = kMaxExactPoints;  // multi-dimensional pooled W_p
  std::size_t max_block_points = 64;             // multi-dimensional nested W_p members
};

struct GapRow {
  double t = 0.0;
  double mean_gap_p = 0.0;
  double w_p_pooled = 0.0;
  double nested_w_p = 0.0;
};

struct CoupledRecord {
  double p = 0.0;
  std::vector<GapRow> rows;
  ParticleEnsemble final_a;
  ParticleEnsemble final_b;
};

/// Evolves two ensembles from different initial laws with identical noise
/// (same seed and stream ids) and records the gaps at cfg.record_every.
CoupledRecord coupled_simulate(const ModelSpec& model, const SimConfig& cfg, const InitialLaw& init_a,
                               const InitialLaw& init_b, const CoupledOptions& options = {});

/// (1 / MN) sum |x - xbar|^p over index-matched particles.
double mean_gap_power(const ParticleEnsemble& a, const ParticleEnsemble& b, double p);

/// W_p between pooled particle clouds. One-dimensional clouds are compared in
/// full; otherwise the leading max_points / M particles of every block.
double pooled_distance(const ParticleEnsemble& a, const ParticleEnsemble& b, double p,
                       std::size_t max_points = kMaxExactPoints);

/// Nested W_p between the block families (multi-dimensional members are
/// truncated to max_block_points leading particles).
double family_distance(const ParticleEnsemble& a, const ParticleEnsemble& b, double p,
                       std::size_t max_block_points = 64);

/// Keeps only the listed blocks (in the given order).
ParticleEnsemble select_blocks(const ParticleEnsemble& ens, std::span<const std::size_t> blocks);

}  // namespace mvcn
