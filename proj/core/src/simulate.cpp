#include "mvcn/simulate.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "mvcn/csv_io.hpp"
#include "mvcn/stats.hpp"

namespace mvcn {
namespace {

std::vector<double> parse_numbers(const std::string& text, const std::string& context) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || end == item.c_str() || *end != '\0' || !std::isfinite(v))
      throw ConfigError("initial law '" + context + "': cannot parse number '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("initial law '" + context + "': no values");
  return out;
}

std::string join_numbers(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

// Cholesky factor of a symmetric positive semi-definite matrix.
Matrix cholesky(const Matrix& cov) {
  const std::size_t d = cov.rows;
  Matrix l(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    double diag = cov(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    const double tol = 1e-12 * std::max(1.0, std::fabs(cov(j, j)));
    if (diag < -tol) throw ConfigError("initial law: covariance is not positive semi-definite");
    l(j, j) = diag > tol ? std::sqrt(diag) : 0.0;
    for (std::size_t i = j + 1; i < d; ++i) {
      double v = cov(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = l(j, j) > 0.0 ? v / l(j, j) : 0.0;
    }
  }
  return l;
}

// |x|^p from |x|^2.
inline double norm_power(double sq, double p) {
  if (p == 2.0) return sq;
  if (p == 4.0) return sq * sq;
  return std::pow(sq, 0.5 * p);
}

inline double squared_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

// The model in flat arrays for the particle loop. Evaluation order matches
// apply_drift / apply_diffusion, so results agree bit for bit (up to the sign
// of zero entries skipped in the sparse linear parts).
struct FlatModel {
  struct Poly {
    std::vector<double> coeff;
    std::vector<unsigned> exps;  // coeff.size() x d
  };
  struct Linear {
    std::uint32_t e, k;
    double w;
  };
  std::vector<Poly> drift;
  std::vector<Linear> idio_linear, common_linear;

  explicit FlatModel(const ModelSpec& model) {
    const std::size_t d = model.dim;
    for (const auto& comp : model.drift.components) {
      Poly p;
      for (const auto& t : comp.terms) {
        p.coeff.push_back(t.coeff);
        p.exps.insert(p.exps.end(), t.exponents.begin(), t.exponents.end());
      }
      drift.push_back(std::move(p));
    }
    const auto flatten = [d](const AffineMatrixField& field, std::vector<Linear>& out) {
      for (std::size_t k = 0; k < field.linear.size(); ++k)
        for (std::size_t e = 0; e < d * d; ++e)
          if (field.linear[k].data[e] != 0.0)
            out.push_back({static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(k), field.linear[k].data[e]});
    };
    flatten(model.diff_idio, idio_linear);
    flatten(model.diff_common, common_linear);
  }
};

inline double int_power(double x, unsigned e) {
  double r = 1.0;
  for (unsigned i = 0; i < e; ++i) r *= x;
  return r;
}

// Fixed-size scratch when the dimension is known at compile time, so the
// particle loop keeps it in registers.
template <std::size_t K>
auto make_buffer(std::size_t size) {
  if constexpr (K > 0)
    return std::array<double, K>{};
  else
    return std::vector<double>(size);
}

struct BlockFailure {
  std::uint64_t step = 0;  // steps completed before the failure, within the interval
  std::size_t block = 0;
  std::size_t particle = 0;
};

// Runs `steps` steps of block b and returns the first non-finite particle.
// D is the dimension when known at compile time, 0 otherwise.
template <std::size_t D>
std::optional<BlockFailure> run_block(ParticleEnsemble& ens, std::size_t b, const ModelSpec& model,
                                      const FlatModel& flat, const StepParams& params, std::uint64_t steps) {
  const std::size_t n = ens.particles_per_block();
  const std::size_t d = D ? D : ens.dim();
  const double dt = params.dt;
  const double sqrt_dt = std::sqrt(dt);
  const bool with_noise = params.noise == StepParams::Noise::Philox;
  const bool idio = with_noise && !model.diff_idio.is_zero();
  const bool common = with_noise && !model.diff_common.is_zero();
  const std::uint32_t block_id = ens.block_ids()[b];
  const std::uint32_t* stream_ids = ens.stream_ids().data() + b * n;
  constexpr std::size_t G = kStepGroup;

  std::vector<double> features(model.feature_count());
  auto f = make_buffer<D>(d);
  auto incr = make_buffer<D>(d);
  auto xi0 = make_buffer<D>(d);
  auto g = make_buffer<D * D>(d * d);
  std::vector<double> cache(idio ? n * G * d : 0);
  FrozenCoefficients frozen;
  auto states = ens.block_states(b);

  // incr += G z with G = base + sum_k x_k L_k.
  const auto add_noise = [&](const std::vector<FlatModel::Linear>& linear, const std::vector<double>& base,
                             const double* x, const double* z) {
    const double* gm = base.data();
    if (!linear.empty()) {
      std::copy(base.begin(), base.end(), g.begin());
      for (const auto& l : linear) g[l.e] += l.w * x[l.k];
      gm = g.data();
    }
    for (std::size_t k = 0; k < d; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += gm[k * d + j] * z[j];
      incr[k] += acc;
    }
  };

  for (std::uint64_t s = 0; s < steps; ++s) {
    const std::uint64_t counter = ens.step + s;
    const bool refill = s == 0 || counter % G == 0;
    const std::size_t slot = static_cast<std::size_t>(counter % G);
    if (!features.empty()) compute_features(model, states, n, features);
    freeze_coefficients(model, features, frozen);
    if (common) {
      draw_step_normal(NoiseStream{params.seed, {block_id, StreamKind::Common, 0}, counter}, xi0);
      for (double& v : xi0) v *= sqrt_dt;
    }
    if (idio && refill) {
      // Separate pass so consecutive Philox evaluations can overlap.
      for (std::size_t i = 0; i < n; ++i) {
        const NoiseStream stream{params.seed, {block_id, StreamKind::Idiosyncratic, stream_ids[i]}, counter / G};
        draw_normal(stream, std::span<double>(cache.data() + i * G * d, G * d));
      }
      for (double& v : cache) v *= sqrt_dt;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double* x = states.data() + i * d;
      for (std::size_t k = 0; k < d; ++k) {
        const auto& p = flat.drift[k];
        double acc = 0.0;
        for (std::size_t t = 0; t < p.coeff.size(); ++t) {
          double v = p.coeff[t];
          for (std::size_t j = 0; j < d; ++j)
            if (p.exps[t * d + j] != 0) v *= int_power(x[j], p.exps[t * d + j]);
          acc += v;
        }
        f[k] = acc + frozen.drift_shift[k];
      }
      if (params.taming) {
        double sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) sq += f[k] * f[k];
        const double denom = 1.0 + dt * std::sqrt(sq);
        for (std::size_t k = 0; k < d; ++k) f[k] /= denom;
      }
      for (std::size_t k = 0; k < d; ++k) incr[k] = f[k] * dt;
      if (idio) add_noise(flat.idio_linear, frozen.idio_base, x, cache.data() + (i * G + slot) * d);
      if (common) add_noise(flat.common_linear, frozen.common_base, x, xi0.data());
      bool finite = true;
      for (std::size_t k = 0; k < d; ++k) {
        x[k] += incr[k];
        finite = finite && std::isfinite(x[k]);
      }
      if (!finite) return BlockFailure{s, b, i};
    }
  }
  return std::nullopt;
}

std::optional<BlockFailure> run_block(ParticleEnsemble& ens, std::size_t b, const ModelSpec& model,
                                      const FlatModel& flat, const StepParams& params, std::uint64_t steps) {
  switch (ens.dim()) {
    case 1:
      return run_block<1>(ens, b, model, flat, params, steps);
    case 2:
      return run_block<2>(ens, b, model, flat, params, steps);
    default:
      return run_block<0>(ens, b, model, flat, params, steps);
  }
}

void require_step_params(const ParticleEnsemble& ens, const ModelSpec& model, const StepParams& params) {
  if (!(params.dt > 0.0) || !std::isfinite(params.dt))
    throw InvalidArgumentError("time step dt must be a positive finite number");
  if (ens.dim() != model.dim)
    throw DimensionMismatchError("ensemble dimension " + std::to_string(ens.dim()) + " does not match model '" +
                                 model.name + "' dimension " + std::to_string(model.dim));
}

std::uint64_t steps_between(double from, double to, double dt) {
  const double span = (to - from) / dt;
  if (span < -1e-9) throw ConfigError("end time lies before the start time");
  return static_cast<std::uint64_t>(std::llround(std::max(0.0, span)));
}

void record_state(TrajectoryRecord& rec, const ParticleEnsemble& ens, std::size_t track) {
  const std::size_t m = ens.blocks(), n = ens.particles_per_block(), d = ens.dim();
  const double t = ens.time;
  std::vector<double> block_moments(m), values(n), block_cos(m), block_x1(m);
  std::vector<double> cos_values(n), x1_values(n);
  for (std::size_t b = 0; b < m; ++b) {
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = ens.particle(b, i);
      sq[i] = squared_norm(x);
      values[i] = norm_power(sq[i], rec.p);
      cos_values[i] = std::cos(x[0]);
      x1_values[i] = x[0];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    block_moments[b] = reproducible_sum(values) * inv_n;
    block_cos[b] = reproducible_sum(cos_values) * inv_n;
    block_x1[b] = reproducible_sum(x1_values) * inv_n;

    BlockStatRow row{t, static_cast<std::uint32_t>(b), std::vector<double>(d), reproducible_sum(sq) * inv_n};
    std::vector<double> coord(n);
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t i = 0; i < n; ++i) coord[i] = ens.particle(b, i)[k];
      row.mean[k] = reproducible_sum(coord) * inv_n;
    }
    rec.block_stats.push_back(std::move(row));
    for (std::size_t i = 0; i < std::min(track, n); ++i) {
      const auto x = ens.particle(b, i);
      rec.paths.push_back({t, static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(i), {x.begin(), x.end()}});
    }
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  double std_error = 0.0;
  if (m >= 2) {
    std_error = sample_stddev(block_moments) / std::sqrt(static_cast<double>(m));
  } else {
    std_error = sample_stddev(values) / std::sqrt(static_cast<double>(n));
  }
  rec.moments.push_back({t, rec.p, reproducible_sum(block_moments) * inv_m, std_error});
  rec.observables.push_back({t, reproducible_sum(block_cos) * inv_m, reproducible_sum(block_x1) * inv_m});
}

}  // namespace

// ---------------------------------------------------------------------------
// InitialLaw

InitialLaw InitialLaw::point(std::vector<double> x) {
  if (x.empty()) throw ConfigError("initial law: point mass needs at least one coordinate");
  for (double v : x)
    if (!std::isfinite(v)) throw ConfigError("initial law: point mass must be finite");
  InitialLaw law;
  law.law_ = Point{std::move(x)};
  return law;
}

InitialLaw InitialLaw::gaussian(std::vector<double> mean, const Matrix& cov) {
  if (mean.empty() || cov.rows != mean.size() || cov.cols != mean.size())
    throw ConfigError("initial law: covariance must be d x d for a mean of length d");
  for (std::size_t i = 0; i < cov.rows; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::fabs(cov(i, j) - cov(j, i)) > 1e-12 * std::max(1.0, std::fabs(cov(i, j))))
        throw ConfigError("initial law: covariance must be symmetric");
  InitialLaw law;
  law.law_ = Gaussian{std::move(mean), cov, cholesky(cov)};
  return law;
}

InitialLaw InitialLaw::isotropic_gaussian(std::vector<double> mean, double sd) {
  if (mean.empty()) throw ConfigError("initial law: Gaussian needs a mean");
  if (!(sd >= 0.0) || !std::isfinite(sd)) throw ConfigError("initial law: standard deviation must be >= 0");
  InitialLaw law;
  law.law_ = Gaussian{std::move(mean), Matrix(1, 1, sd * sd), Matrix(1, 1, sd)};
  return law;
}

InitialLaw InitialLaw::sample(EmpiricalMeasure measure, std::string path) {
  InitialLaw law;
  law.law_ = Sample{std::make_shared<const EmpiricalMeasure>(std::move(measure)), std::move(path)};
  return law;
}

InitialLaw InitialLaw::parse(const std::string& spec, std::size_t dim) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw ConfigError("initial law '" + spec + "': expected gauss:m,s | point:x1,...,xd | csv:PATH");
  const std::string kind = spec.substr(0, colon);
  const std::string body = spec.substr(colon + 1);
  if (kind == "point") {
    auto x = parse_numbers(body, spec);
    if (x.size() != 1 && x.size() != dim)
      throw ConfigError("initial law '" + spec + "': expected 1 or " + std::to_string(dim) + " coordinates");
    return point(std::move(x));
  }
  if (kind == "gauss") {
    auto v = parse_numbers(body, spec);
    if (v.size() < 2 || (v.size() - 1 != 1 && v.size() - 1 != dim))
      throw ConfigError("initial law '" + spec + "': expected gauss:m,s or gauss:m1,...,m" + std::to_string(dim) +
                        ",s");
    const double sd = v.back();
    v.pop_back();
    return isotropic_gaussian(std::move(v), sd);
  }
  if (kind == "gaussian") {
    const auto semi = body.find(';');
    if (semi == std::string::npos) throw ConfigError("initial law '" + spec + "': expected gaussian:MEAN;COV");
    auto mean = parse_numbers(body.substr(0, semi), spec);
    const auto cov_values = parse_numbers(body.substr(semi + 1), spec);
    const std::size_t d = mean.size();
    if (cov_values.size() != d * d)
      throw ConfigError("initial law '" + spec + "': covariance needs " + std::to_string(d * d) + " entries");
    Matrix cov(d, d);
    cov.data = cov_values;
    return gaussian(std::move(mean), cov);
  }
  if (kind == "csv") {
    if (body.empty()) throw ConfigError("initial law '" + spec + "': missing path");
    return sample(point_file_measure(read_point_csv(body)), body);
  }
  throw ConfigError("initial law '" + spec + "': unknown kind '" + kind + "' (use gauss, gaussian, point or csv)");
}

std::string InitialLaw::to_string() const {
  if (const auto* p = std::get_if<Point>(&law_)) return "point:" + join_numbers(p->x);
  if (const auto* g = std::get_if<Gaussian>(&law_)) {
    if (g->chol.rows == 1) {
      auto v = g->mean;
      v.push_back(g->chol(0, 0));
      return "gauss:" + join_numbers(v);
    }
    return "gaussian:" + join_numbers(g->mean) + ";" + join_numbers(g->cov.data);
  }
  return "csv:" + std::get<Sample>(law_).path;
}

std::size_t InitialLaw::dim() const {
  if (const auto* p = std::get_if<Point>(&law_)) return p->x.size() == 1 ? 0 : p->x.size();
  if (const auto* g = std::get_if<Gaussian>(&law_)) return g->mean.size() == 1 && g->cov.rows == 1 ? 0 : g->mean.size();
  return std::get<Sample>(law_).measure->dim();
}

void InitialLaw::draw(const NoiseStream& stream, std::size_t flat_index, std::size_t total,
                      std::span<double> out) const {
  const std::size_t d = out.size();
  if (const auto* p = std::get_if<Point>(&law_)) {
    for (std::size_t k = 0; k < d; ++k) out[k] = p->x.size() == 1 ? p->x[0] : p->x[k];
    return;
  }
  if (const auto* g = std::get_if<Gaussian>(&law_)) {
    std::vector<double> z(d);
    draw_normal(stream, z);
    if (g->chol.rows == 1) {
      for (std::size_t k = 0; k < d; ++k) out[k] = (g->mean.size() == 1 ? g->mean[0] : g->mean[k]) + g->chol(0, 0) * z[k];
      return;
    }
    for (std::size_t k = 0; k < d; ++k) {
      double acc = g->mean[k];
      for (std::size_t j = 0; j <= k; ++j) acc += g->chol(k, j) * z[j];
      out[k] = acc;
    }
    return;
  }
  const auto& mu = *std::get<Sample>(law_).measure;
  std::size_t row = 0;
  if (mu.uniform() && mu.size() == total) {
    row = flat_index;
  } else {
    const double u = draw_uniform(stream);
    if (mu.uniform()) {
      row = static_cast<std::size_t>(std::ceil(u * static_cast<double>(mu.size()))) - 1;
    } else {
      double cum = 0.0;
      row = mu.size() - 1;
      for (std::size_t i = 0; i < mu.size(); ++i) {
        cum += mu.weight(i);
        if (u <= cum) {
          row = i;
          break;
        }
      }
    }
    row = std::min(row, mu.size() - 1);
  }
  const auto x = mu.point(row);
  std::copy(x.begin(), x.end(), out.begin());
}

// ---------------------------------------------------------------------------
// ParticleEnsemble

ParticleEnsemble::ParticleEnsemble(std::size_t blocks, std::size_t per_block, std::size_t dim)
    : blocks_(blocks),
      per_block_(per_block),
      dim_(dim),
      states_(blocks * per_block * dim, 0.0),
      stream_ids_(blocks * per_block),
      block_ids_(blocks) {
  if (blocks == 0 || per_block == 0 || dim == 0)
    throw InvalidArgumentError("ParticleEnsemble: blocks, particles and dimension must be positive");
  if (blocks > UINT32_MAX || per_block > UINT32_MAX)
    throw InvalidArgumentError("ParticleEnsemble: at most 2^32 - 1 blocks and particles per block");
  for (std::size_t b = 0; b < blocks; ++b) {
    block_ids_[b] = static_cast<std::uint32_t>(b);
    for (std::size_t i = 0; i < per_block; ++i) stream_ids_[b * per_block + i] = static_cast<std::uint32_t>(i);
  }
}

EmpiricalMeasure ParticleEnsemble::block_measure(std::size_t b, std::size_t max_points) const {
  const std::size_t k = std::min(per_block_, std::max<std::size_t>(1, max_points));
  const auto s = block_states(b);
  return EmpiricalMeasure(dim_, std::vector<double>(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(k * dim_)));
}

EmpiricalMeasure ParticleEnsemble::pooled_measure(std::size_t max_points) const {
  if (max_points >= total_particles()) return EmpiricalMeasure(dim_, states_);
  const std::size_t k = std::max<std::size_t>(1, max_points / blocks_);
  std::vector<double> pts;
  pts.reserve(k * blocks_ * dim_);
  for (std::size_t b = 0; b < blocks_; ++b) {
    const auto s = block_states(b);
    pts.insert(pts.end(), s.begin(), s.begin() + static_cast<std::ptrdiff_t>(std::min(k, per_block_) * dim_));
  }
  return EmpiricalMeasure(dim_, std::move(pts));
}

MeasureEnsemble ParticleEnsemble::block_family(std::size_t max_points_per_block) const {
  std::vector<EmpiricalMeasure> members;
  members.reserve(blocks_);
  for (std::size_t b = 0; b < blocks_; ++b) members.push_back(block_measure(b, max_points_per_block));
  return MeasureEnsemble(std::move(members));
}

// ---------------------------------------------------------------------------
// SimConfig

void SimConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be a positive finite number");
  if (!std::isfinite(t_start) || !std::isfinite(t_end) || t_end < t_start)
    throw ConfigError("t_end must be finite and not before the start time");
  if (particles == 0) throw ConfigError("particles (N) must be positive");
  if (blocks == 0) throw ConfigError("blocks (M) must be positive");
  if (particles > UINT32_MAX || blocks > UINT32_MAX) throw ConfigError("N and M must fit in 32 bits");
  if (record_every == 0) throw ConfigError("record_every must be a positive number of steps");
  if (!(snapshot_every >= 0.0) || !std::isfinite(snapshot_every))
    throw ConfigError("snapshot_every must be >= 0");
  if (moment_p < 0.0 || !std::isfinite(moment_p)) throw ConfigError("moment_p must be >= 0");
  for (double t : snapshot_times)
    if (!std::isfinite(t)) throw ConfigError("snapshot times must be finite");
}

std::uint64_t SimConfig::total_steps() const { return steps_between(t_start, t_end, dt); }

// ---------------------------------------------------------------------------
// Engine

ParticleEnsemble initialize_ensemble(const ModelSpec& model, const SimConfig& cfg) {
  cfg.validate();
  const std::size_t law_dim = cfg.initial_law.dim();
  if (law_dim != 0 && law_dim != model.dim)
    throw ConfigError("initial law '" + cfg.initial_law.to_string() + "' has dimension " + std::to_string(law_dim) +
                      " but model '" + model.name + "' has dimension " + std::to_string(model.dim));
  ParticleEnsemble ens(cfg.blocks, cfg.particles, model.dim);
  ens.time = cfg.t_start;
  ens.step = cfg.step_offset;
  const std::size_t total = ens.total_particles();
  for (std::size_t b = 0; b < ens.blocks(); ++b) {
    for (std::size_t i = 0; i < ens.particles_per_block(); ++i) {
      const std::size_t flat = b * ens.particles_per_block() + i;
      const NoiseStream stream{cfg.seed, {ens.block_ids()[b], StreamKind::Initial, ens.stream_ids()[flat]}, 0};
      cfg.initial_law.draw(stream, flat, total, ens.particle(b, i));
    }
  }
  return ens;
}

void em_step(ParticleEnsemble& ens, const ModelSpec& model, const StepParams& params, unsigned threads) {
  advance(ens, model, params, 1, threads);
}

void advance(ParticleEnsemble& ens, const ModelSpec& model, const StepParams& params, std::uint64_t steps,
             unsigned threads) {
  require_step_params(ens, model, params);
  if (steps == 0) return;
  const FlatModel flat(model);
  const std::size_t m = ens.blocks();
  std::vector<std::optional<BlockFailure>> failures(m);
  const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), m);
  if (workers <= 1) {
    for (std::size_t b = 0; b < m; ++b) failures[b] = run_block(ens, b, model, flat, params, steps);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t b = next++; b < m; b = next++) failures[b] = run_block(ens, b, model, flat, params, steps);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::optional<BlockFailure> first;
  for (const auto& f : failures)
    if (f && (!first || f->step < first->step)) first = f;
  if (first) {
    const double t = ens.time + static_cast<double>(first->step + 1) * params.dt;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "blow-up: non-finite state in block %zu, particle %zu at t=%.10g (dt=%g, taming %s); reduce dt%s",
                  first->block, first->particle, t, params.dt, params.taming ? "on" : "off",
                  params.taming ? "" : " or enable taming");
    throw BlowUpError(buf, first->block, first->particle, t);
  }
  ens.step += steps;
  ens.time += static_cast<double>(steps) * params.dt;
}

TrajectoryRecord simulate(const ModelSpec& model, const SimConfig& cfg) {
  return simulate_from(model, cfg, initialize_ensemble(model, cfg));
}

TrajectoryRecord simulate_from(const ModelSpec& model, const SimConfig& cfg, ParticleEnsemble ens) {
  cfg.validate();
  model.validate();
  if (ens.dim() != model.dim) throw DimensionMismatchError("ensemble and model dimensions differ");
  const double origin_time = ens.time;
  const std::uint64_t steps = steps_between(origin_time, cfg.t_end, cfg.dt);

  TrajectoryRecord rec;
  rec.p = cfg.moment_p > 0.0 ? cfg.moment_p : model.constants.p;
  if (!cfg.taming && cfg.dt > 0.01 && model.drift_degree() >= 3)
    rec.warnings.push_back("dt > 0.01 with taming off and a drift of degree >= 3: the explicit scheme may blow up");

  std::set<std::uint64_t> snapshot_steps{0, steps};
  if (cfg.snapshot_every > 0.0) {
    const auto every = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(cfg.snapshot_every / cfg.dt)));
    for (std::uint64_t k = every; k < steps; k += every) snapshot_steps.insert(k);
  }
  for (double t : cfg.snapshot_times) {
    const double k = (t - origin_time) / cfg.dt;
    if (k < -1e-9 || k > static_cast<double>(steps) + 1e-9)
      throw ConfigError("snapshot time " + format_double(t) + " lies outside the simulated interval");
    snapshot_steps.insert(static_cast<std::uint64_t>(std::llround(std::max(0.0, k))));
  }
  std::set<std::uint64_t> stops = snapshot_steps;
  for (std::uint64_t k = 0; k <= steps; k += cfg.record_every) stops.insert(k);

  const StepParams params{cfg.dt, cfg.taming, cfg.seed, StepParams::Noise::Philox};
  std::uint64_t done = 0;
  for (std::uint64_t stop : stops) {
    if (stop > done) {
      try {
        advance(ens, model, params, stop - done, cfg.threads);
      } catch (BlowUpError& e) {
        rec.final_state = ens;
        e.attach(std::make_shared<const TrajectoryRecord>(std::move(rec)));
        throw;
      }
      done = stop;
      ens.time = origin_time + static_cast<double>(done) * cfg.dt;
    }
    if (stop % cfg.record_every == 0 || stop == steps) record_state(rec, ens, cfg.track);
    if (snapshot_steps.count(stop)) rec.snapshots.push_back(ens);
  }
  rec.final_state = std::move(ens);
  return rec;
}

// ---------------------------------------------------------------------------
// Coupling

double mean_gap_power(const ParticleEnsemble& a, const ParticleEnsemble& b, double p) {
  if (a.blocks() != b.blocks() || a.particles_per_block() != b.particles_per_block() || a.dim() != b.dim())
    throw DimensionMismatchError("coupled ensembles must have the same shape");
  const std::size_t n = a.particles_per_block(), d = a.dim();
  std::vector<double> block_means(a.blocks()), values(n);
  for (std::size_t blk = 0; blk < a.blocks(); ++blk) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = a.particle(blk, i), y = b.particle(blk, i);
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) sq += (x[k] - y[k]) * (x[k] - y[k]);
      values[i] = norm_power(sq, p);
    }
    block_means[blk] = reproducible_sum(values) / static_cast<double>(n);
  }
  return reproducible_sum(block_means) / static_cast<double>(a.blocks());
}

double pooled_distance(const ParticleEnsemble& a, const ParticleEnsemble& b, double p, std::size_t max_points) {
  if (a.dim() != b.dim()) throw DimensionMismatchError("ensembles live in different dimensions");
  if (a.dim() == 1) return wasserstein_p(a.pooled_measure(), b.pooled_measure(), p);
  if (a.blocks() != b.blocks())
    throw DimensionMismatchError("multi-dimensional pooled distance needs equal block counts");
  const std::size_t per = std::max<std::size_t>(1, max_points / a.blocks());
  const std::size_t k = std::min({per, a.particles_per_block(), b.particles_per_block()});
  return wasserstein_p(a.pooled_measure(k * a.blocks()), b.pooled_measure(k * b.blocks()), p);
}

double family_distance(const ParticleEnsemble& a, const ParticleEnsemble& b, double p, std::size_t max_block_points) {
  if (a.dim() != b.dim()) throw DimensionMismatchError("ensembles live in different dimensions");
  if (a.dim() == 1) return nested_wasserstein(a.block_family(), b.block_family(), p);
  const std::size_t k = std::min({max_block_points, a.particles_per_block(), b.particles_per_block()});
  return nested_wasserstein(a.block_family(k), b.block_family(k), p);
}

ParticleEnsemble select_blocks(const ParticleEnsemble& ens, std::span<const std::size_t> blocks) {
  ParticleEnsemble out(blocks.size(), ens.particles_per_block(), ens.dim());
  const std::size_t n = ens.particles_per_block();
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const std::size_t b = blocks[j];
    if (b >= ens.blocks()) throw InvalidArgumentError("select_blocks: block index out of range");
    const auto src = ens.block_states(b);
    std::copy(src.begin(), src.end(), out.block_states(j).begin());
    out.block_ids()[j] = ens.block_ids()[b];
    std::copy(ens.stream_ids().begin() + static_cast<std::ptrdiff_t>(b * n),
              ens.stream_ids().begin() + static_cast<std::ptrdiff_t>((b + 1) * n),
              out.stream_ids().begin() + static_cast<std::ptrdiff_t>(j * n));
  }
  out.time = ens.time;
  out.step = ens.step;
  return out;
}

CoupledRecord coupled_simulate(const ModelSpec& model, const SimConfig& cfg, const InitialLaw& init_a,
                               const InitialLaw& init_b, const CoupledOptions& options) {
  model.validate();
  SimConfig cfg_a = cfg, cfg_b = cfg;
  cfg_a.initial_law = init_a;
  cfg_b.initial_law = init_b;
  ParticleEnsemble a = initialize_ensemble(model, cfg_a);
  ParticleEnsemble b = initialize_ensemble(model, cfg_b);

  CoupledRecord rec;
  rec.p = options.p > 0.0 ? options.p : model.constants.p;
  const bool nested = a.blocks() <= kMaxEnsembleMembers;
  auto record = [&] {
    GapRow row;
    row.t = a.time;
    row.mean_gap_p = mean_gap_power(a, b, rec.p);
    row.w_p_pooled = pooled_distance(a, b, rec.p, options.max_pooled_points);
    row.nested_w_p = nested ? family_distance(a, b, rec.p, options.max_block_points)
                            : std::numeric_limits<double>::quiet_NaN();
    rec.rows.push_back(row);
  };

  const std::uint64_t steps = cfg.total_steps();
  const StepParams params{cfg.dt, cfg.taming, cfg.seed, StepParams::Noise::Philox};
  record();
  std::uint64_t done = 0;
  while (done < steps) {
    const std::uint64_t chunk = std::min<std::uint64_t>(cfg.record_every, steps - done);
    advance(a, model, params, chunk, cfg.threads);
    advance(b, model, params, chunk, cfg.threads);
    done += chunk;
    a.time = b.time = cfg.t_start + static_cast<double>(done) * cfg.dt;
    record();
  }
  rec.final_a = std::move(a);
  rec.final_b = std::move(b);
  return rec;
}

}  // namespace mvcn
