#include "mvcn/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "mvcn/error.hpp"
#include "mvcn/model_json.hpp"

namespace mvcn {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Tags that separate derived seeds of different purposes.
constexpr std::uint64_t kTagInitialLaw = 0x1000;
constexpr std::uint64_t kTagRestart = 0x2000;
constexpr std::uint64_t kTagSplit = 0x3000;

double tolerance(const Tolerances& tol, const std::string& key) {
  const auto it = tol.find(key);
  if (it == tol.end()) throw ConfigError("report tolerances lack '" + key + "'");
  return it->second;
}

std::string fmt(double v) { return format_double(v); }

double resolve_p(double requested, const ModelSpec& model) { return requested > 0.0 ? requested : model.constants.p; }

void require_order(double p) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw ConfigError("distance order p must be >= 1");
}

std::vector<double> log_values(std::span<const double> v) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return std::log(x); });
  return out;
}

ExperimentReport make_report(const std::string& name, const ModelSpec& model, const SimConfig& cfg,
                             const std::string& extra) {
  ExperimentReport r;
  r.name = name;
  r.inputs["model"] = model.name;
  r.inputs["config_digest"] = digest(model_to_json(model) + sim_config_to_json(cfg) + extra);
  r.inputs["seed"] = std::to_string(cfg.seed);
  return r;
}

void finish(ExperimentReport& report, const VerdictOutcome& outcome, const std::filesystem::path& out_dir) {
  report.verdict = outcome.verdict;
  for (const auto& [k, v] : outcome.fitted) report.fitted[k] = v;
  report.notes.insert(report.notes.end(), outcome.notes.begin(), outcome.notes.end());
  write_report_json(out_dir / "report.json", report);
}

// Fisher-Yates permutation of 0..m-1 driven by counter-based uniforms.
std::vector<std::size_t> block_permutation(std::size_t m, std::uint64_t seed) {
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t j = m; j-- > 1;) {
    const double u = draw_uniform(NoiseStream{seed, {0, StreamKind::Initial, static_cast<std::uint32_t>(j)}, 0});
    const auto k = std::min(j, static_cast<std::size_t>(std::ceil(u * static_cast<double>(j + 1))) - 1);
    std::swap(perm[j], perm[k]);
  }
  return perm;
}

// W_p from the pooled cloud to the Dirac mass at its mean: the spread the
// floor has to be small against.
double spread(const ParticleEnsemble& ens, double p) {
  const auto mu = ens.pooled_measure();
  std::vector<double> center(ens.dim());
  std::vector<double> coord(mu.size());
  for (std::size_t k = 0; k < ens.dim(); ++k) {
    for (std::size_t i = 0; i < mu.size(); ++i) coord[i] = mu.point(i)[k];
    center[k] = reproducible_sum(coord) / static_cast<double>(mu.size());
  }
  return wasserstein_to_dirac(mu, center, p);
}

// Equal-count subsample taking every stride-th point (stored samples are
// block-ordered, so a prefix would come from one block only).
EmpiricalMeasure strided_subsample(const EmpiricalMeasure& mu, std::size_t k) {
  if (k >= mu.size()) return mu;
  std::vector<double> pts;
  pts.reserve(k * mu.dim());
  for (std::size_t j = 0; j < k; ++j) {
    const auto x = mu.point(j * mu.size() / k);
    pts.insert(pts.end(), x.begin(), x.end());
  }
  return EmpiricalMeasure(mu.dim(), std::move(pts));
}

struct DistanceRow {
  double level;  // 0 pooled, 1 nested
  double run_a, t_a, run_b, t_b, distance, floor, scale;
};

Table distance_table(const std::vector<DistanceRow>& rows) {
  Table t{{"level", "run_a", "t_a", "run_b", "t_b", "distance", "floor", "scale"}, {}};
  for (const auto& r : rows) t.add_row({r.level, r.run_a, r.t_a, r.run_b, r.t_b, r.distance, r.floor, r.scale});
  return t;
}

const ParticleEnsemble& snapshot_at(const TrajectoryRecord& rec, double t, double dt) {
  for (const auto& s : rec.snapshots)
    if (std::fabs(s.time - t) <= 0.5 * dt) return s;
  throw Error("internal: no snapshot at t=" + fmt(t));
}

void require_increasing(const std::vector<std::size_t>& n_list) {
  if (n_list.size() < 2) throw ConfigError("N list needs at least two sizes");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (n_list[i] == 0) throw ConfigError("N list entries must be positive");
    if (i && n_list[i] <= n_list[i - 1]) throw ConfigError("N list must be strictly increasing");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// eps_N

EpsCase eps_case(std::size_t d, double p, double q) {
  if (d == 0) throw InvalidArgumentError("dimension must be positive");
  if (!(q >= 2.0 && q < p) || !std::isfinite(p))
    throw InvalidArgumentError("eps_N requires 2 <= q < p (got q=" + fmt(q) + ", p=" + fmt(p) + ")");
  const double half = 0.5 * static_cast<double>(d);
  if (q > half) {
    if (p == 2.0 * q) throw InvalidArgumentError("eps_N with q > d/2 requires p != 2q");
    return EpsCase::AboveHalfDim;
  }
  if (q == half) {
    if (p == 2.0 * q) throw InvalidArgumentError("eps_N with q = d/2 requires p != 2q");
    return EpsCase::AtHalfDim;
  }
  const double dd = static_cast<double>(d);
  if (p == dd / (dd - q)) throw InvalidArgumentError("eps_N with q < d/2 requires p != d/(d-q)");
  return EpsCase::BelowHalfDim;
}

double eps_n(std::size_t d, double p, double q, double n) {
  if (!(n >= 1.0)) throw InvalidArgumentError("eps_N needs N >= 1");
  const double tail = std::pow(n, -(p - q) / p);
  switch (eps_case(d, p, q)) {
    case EpsCase::AboveHalfDim: return 1.0 / std::sqrt(n) + tail;
    case EpsCase::AtHalfDim: return std::log1p(n) / std::sqrt(n) + tail;
    case EpsCase::BelowHalfDim: return std::pow(n, -q / static_cast<double>(d)) + tail;
  }
  return kNaN;
}

double eps_slope(std::size_t d, double p, double q, std::span<const double> n_values) {
  std::vector<double> x, y;
  for (double n : n_values) {
    x.push_back(std::log(n));
    y.push_back(std::log(eps_n(d, p, q, n)));
  }
  return fit_line(x, y).slope;
}

LinearFit fit_log(std::span<const double> x, std::span<const double> y) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
    if (y[i] > 0.0 && std::isfinite(y[i])) {
      xs.push_back(x[i]);
      ys.push_back(std::log(y[i]));
    }
  }
  return fit_line(xs, ys);
}

// ---------------------------------------------------------------------------
// Verdicts

VerdictOutcome moment_bound_verdict(const Table& moments, const Tolerances& tol) {
  const double burn_in = tolerance(tol, "burn_in");
  const double sigmas = tolerance(tol, "trend_sigmas");
  const auto t = moments.column("t");
  const auto m = moments.column("moment");
  const auto se = moments.column("stderr");
  VerdictOutcome out;
  if (t.empty()) {
    out.notes.push_back("no moment records");
    return out;
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m[i])) {
      out.verdict = Verdict::Fail;
      out.notes.push_back("moment became non-finite at t=" + fmt(t[i]) + " (blow-up)");
      return out;
    }
  }
  const double t_half = t.front() + 0.5 * (t.back() - t.front());
  std::vector<double> ht, hm, hse;
  double k_hat = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] >= t_half) {
      ht.push_back(t[i]);
      hm.push_back(m[i]);
      hse.push_back(se[i]);
      k_hat = std::max(k_hat, m[i] + 3.0 * se[i]);
    }
  }
  double running_max = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] >= t.front() + burn_in) running_max = std::max(running_max, m[i]);
  const double bound = m.front() + k_hat;
  out.fitted["initial_moment"] = m.front();
  out.fitted["k_hat"] = k_hat;
  out.fitted["running_max"] = running_max;
  out.fitted["bound"] = bound;
  if (ht.size() < 3) {
    out.notes.push_back("fewer than three records in the second half; lengthen the run or record more often");
    return out;
  }
  const auto fit = fit_line(ht, hm);
  const double drift = fit.slope * (ht.back() - ht.front());
  const double allowed = sigmas * mean(hse);
  out.fitted["trend_slope"] = fit.slope;
  out.fitted["trend_drift"] = drift;
  out.fitted["trend_allowed"] = allowed;
  const bool bounded = running_max <= bound;
  const bool flat = drift <= allowed;
  if (!bounded) out.notes.push_back("running max exceeds initial moment + K_hat");
  if (!flat) out.notes.push_back("upward trend in the second half");
  out.verdict = bounded && flat ? Verdict::Pass : Verdict::Fail;
  return out;
}

VerdictOutcome contraction_verdict(const Table& gap, const Tolerances& tol) {
  const double p = tolerance(tol, "p");
  const double c3 = tolerance(tol, "c3");
  const double c4 = tolerance(tol, "c4");
  const double rel = tolerance(tol, "rate_tolerance");
  const double floor = tolerance(tol, "noise_floor");
  const double min_efoldings = tolerance(tol, "min_efoldings");
  const auto t = gap.column("t");
  const auto g = gap.column("mean_gap_p");
  const auto w = gap.column("w_p_pooled");
  const auto nw = gap.column("nested_w_p");

  VerdictOutcome out;
  const double pathwise = -0.5 * p * (c3 - c4);
  const double law = -0.5 * (c3 - c4);
  out.fitted["rate_pathwise_theory"] = pathwise;
  out.fitted["rate_law_theory"] = law;
  out.fitted["slope_threshold"] = pathwise * (1.0 - rel);
  out.fitted["product_slope_threshold"] = law * (1.0 - rel);

  if (std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) {
    out.verdict = Verdict::Pass;
    out.fitted["slope"] = kNaN;
    out.fitted["slope_w_p"] = kNaN;
    out.fitted["slope_product"] = kNaN;
    out.notes.push_back("gap identically zero: vacuous pass, slope undefined");
    return out;
  }

  // Fit window: up to (excluding) the first record below the noise floor.
  std::size_t end = t.size();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (g[i] < floor) {
      end = i;
      break;
    }
  }
  const bool floor_reached = end < t.size();
  std::vector<double> wt(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(end));
  std::vector<double> wg(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(end));
  std::vector<double> ww(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(end));
  std::vector<double> wprod(end);
  for (std::size_t i = 0; i < end; ++i) wprod[i] = w[i] + nw[i];

  const auto fit = fit_log(wt, wg);
  const auto fit_w = fit_log(wt, ww);
  const auto fit_prod = fit_log(wt, wprod);
  const double efoldings = end >= 1 && g[0] > 0.0 ? std::log(g[0] / g[end - 1]) : 0.0;
  out.fitted["slope"] = fit.slope;
  out.fitted["slope_stderr"] = fit.slope_stderr;
  out.fitted["slope_w_p"] = fit_w.slope;
  out.fitted["slope_product"] = fit_prod.slope;
  out.fitted["fit_t_end"] = end >= 1 ? t[end - 1] : kNaN;
  out.fitted["efoldings"] = efoldings;
  out.fitted["fit_points"] = static_cast<double>(fit.points);

  if (fit.points < 3) {
    out.notes.push_back("fewer than three positive gap records before the noise floor");
    return out;
  }
  if (floor_reached && efoldings < min_efoldings) {
    out.notes.push_back("noise floor reached after " + fmt(efoldings) + " e-foldings (< " + fmt(min_efoldings) + ")");
    return out;
  }
  out.verdict = fit.slope <= pathwise * (1.0 - rel) ? Verdict::Pass : Verdict::Fail;
  if (out.verdict == Verdict::Fail)
    out.notes.push_back("gap decays at " + fmt(fit.slope) + ", slower than " + fmt(pathwise * (1.0 - rel)));
  return out;
}

VerdictOutcome distance_table_verdict(const Table& rows, const Tolerances& tol) {
  const double factor = tolerance(tol, "floor_factor");
  const double max_fraction = tolerance(tol, "max_floor_fraction");
  const auto level = rows.column("level");
  const auto dist = rows.column("distance");
  const auto floor = rows.column("floor");
  const auto scale = rows.column("scale");
  VerdictOutcome out;
  bool failed = false, degenerate = false;
  double ratio[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const int lv = level[i] == 0.0 ? 0 : 1;
    if (dist[i] == 0.0) continue;
    if (!(floor[i] > 0.0) || !std::isfinite(floor[i])) {
      degenerate = true;
      ratio[lv] = kNaN;
      continue;
    }
    const double r = dist[i] / floor[i];
    if (!std::isnan(ratio[lv])) ratio[lv] = std::max(ratio[lv], r);
    if (dist[i] > factor * floor[i]) failed = true;
    if (floor[i] >= max_fraction * scale[i]) degenerate = true;
  }
  out.fitted["max_ratio_pooled"] = ratio[0];
  out.fitted["max_ratio_nested"] = ratio[1];
  if (failed) {
    out.verdict = Verdict::Fail;
    out.notes.push_back("some distance exceeds " + fmt(factor) + " x sampling floor");
  } else if (degenerate) {
    out.verdict = Verdict::Inconclusive;
    out.notes.push_back("sampling floor not separable from the law's spread; rerun with larger N and M");
  } else {
    out.verdict = Verdict::Pass;
  }
  return out;
}

VerdictOutcome poc_verdict(const Table& poc, const Tolerances& tol) {
  const double slack = tolerance(tol, "slope_tolerance");
  const auto n = poc.column("N");
  const auto strong = poc.column("err_strong");
  const auto measure = poc.column("err_measure");
  const auto eps = poc.column("eps_theory");
  const auto log_n = log_values(n);
  VerdictOutcome out;
  const double eps_fit = fit_line(log_n, log_values(eps)).slope;
  out.fitted["slope_eps"] = eps_fit;
  out.fitted["slope_threshold"] = eps_fit + slack;
  if (std::all_of(strong.begin(), strong.end(), [](double v) { return v == 0.0; })) {
    out.verdict = Verdict::Pass;
    out.fitted["slope_strong"] = kNaN;
    out.notes.push_back("err_strong identically zero: vacuous pass");
    return out;
  }
  const auto fit = fit_log(log_n, strong);
  const auto fit_m = fit_log(log_n, measure);
  out.fitted["slope_strong"] = fit.slope;
  out.fitted["slope_measure"] = fit_m.slope;
  bool decreasing = true;
  for (std::size_t i = 1; i < strong.size(); ++i) decreasing = decreasing && strong[i] < strong[i - 1];
  out.fitted["strictly_decreasing"] = decreasing ? 1.0 : 0.0;
  const bool slope_ok = fit.points == strong.size() && fit.slope <= eps_fit + slack;
  if (!decreasing) out.notes.push_back("err_strong is not strictly decreasing in N");
  if (!slope_ok) out.notes.push_back("err_strong slope " + fmt(fit.slope) + " above " + fmt(eps_fit + slack));
  out.verdict = decreasing && slope_ok ? Verdict::Pass : Verdict::Fail;
  return out;
}

VerdictOutcome convergence_verdict(const Table& rows, const Tolerances& tol) {
  const double factor = tolerance(tol, "floor_factor");
  VerdictOutcome out;
  bool ok = true, degenerate = false;
  for (const char* level : {"pooled", "nested"}) {
    const auto d = rows.column(std::string(level) == "pooled" ? "w_pooled" : "nested");
    const auto f = rows.column(std::string("floor_") + level);
    for (std::size_t i = 1; i < d.size(); ++i) {
      if (!std::isfinite(f[i]) || !std::isfinite(d[i])) {
        degenerate = true;
        continue;
      }
      if (!(d[i] <= d[i - 1] || d[i] <= factor * f[i])) {
        ok = false;
        out.notes.push_back(std::string(level) + " distance rises at row " + std::to_string(i) + " above the floor");
      }
    }
    out.fitted[std::string("last_") + level] = d.empty() ? kNaN : d.back();
  }
  out.verdict = !ok ? Verdict::Fail : degenerate ? Verdict::Inconclusive : Verdict::Pass;
  if (out.verdict == Verdict::Inconclusive) out.notes.push_back("missing floors; use at least two blocks");
  return out;
}

VerdictOutcome recompute_verdict(const std::filesystem::path& dir) {
  const auto report = read_report_json(dir / "report.json");
  const auto& tol = report.tolerances;
  if (report.name == "moment_bound") return moment_bound_verdict(read_table_csv(dir / "moments.csv"), tol);
  if (report.name == "contraction") return contraction_verdict(read_table_csv(dir / "gap.csv"), tol);
  if (report.name == "invariant") return distance_table_verdict(read_table_csv(dir / "invariant.csv"), tol);
  if (report.name == "semigroup") return distance_table_verdict(read_table_csv(dir / "semigroup.csv"), tol);
  if (report.name == "poc") return poc_verdict(read_table_csv(dir / "poc.csv"), tol);
  if (report.name == "convergence_to_invariant")
    return convergence_verdict(read_table_csv(dir / "converge.csv"), tol);
  throw ConfigError("unknown experiment '" + report.name + "' in " + (dir / "report.json").string());
}

// ---------------------------------------------------------------------------
// Floors

double block_split_floor(const ParticleEnsemble& ens, double p, bool nested, std::size_t splits, std::uint64_t seed,
                         std::size_t max_pooled_points, std::size_t max_block_points) {
  const std::size_t m = ens.blocks();
  if (m < 2 || splits == 0) return kNaN;
  const std::size_t half = m / 2;
  double total = 0.0;
  for (std::size_t k = 0; k < splits; ++k) {
    const auto perm = block_permutation(m, derive_seed(seed, kTagSplit + k));
    const std::span<const std::size_t> all(perm);
    const auto a = select_blocks(ens, all.subspan(0, half));
    const auto b = select_blocks(ens, all.subspan(half, half));
    total += nested ? family_distance(a, b, p, max_block_points) : pooled_distance(a, b, p, max_pooled_points);
  }
  return total / static_cast<double>(splits);
}

// ---------------------------------------------------------------------------
// Experiments

ExperimentReport run_moment_bound(const ModelSpec& model, const MomentBoundOptions& opt,
                                  const std::filesystem::path& out_dir) {
  model.validate();
  opt.sim.validate();
  if (opt.sim.t_end - opt.sim.t_start < 20.0) throw ConfigError("moment bound needs a run of length >= 20");
  auto report = make_report("moment_bound", model, opt.sim, "");
  report.tolerances = {{"burn_in", opt.burn_in}, {"trend_sigmas", opt.trend_sigmas}};
  report.series = {"moments.csv"};
  std::vector<MomentRow> rows;
  try {
    rows = simulate(model, opt.sim).moments;
  } catch (const BlowUpError& e) {
    if (e.partial()) rows = e.partial()->moments;
    rows.push_back({e.time(), resolve_p(opt.sim.moment_p, model), std::numeric_limits<double>::infinity(), kNaN});
    report.notes.push_back(e.what());
  }
  write_table_csv(out_dir / "moments.csv", moments_table(rows));
  finish(report, moment_bound_verdict(moments_table(rows), report.tolerances), out_dir);
  return report;
}

ExperimentReport run_contraction(const ModelSpec& model, const ContractionOptions& opt,
                                 const std::filesystem::path& out_dir) {
  model.validate();
  const double p = resolve_p(opt.p, model);
  require_order(p);
  auto coupling = opt.coupling;
  coupling.p = p;
  auto report = make_report("contraction", model, opt.sim, opt.init_a.to_string() + "|" + opt.init_b.to_string());
  report.inputs["init_a"] = opt.init_a.to_string();
  report.inputs["init_b"] = opt.init_b.to_string();
  report.series = {"gap.csv"};

  const auto rec = coupled_simulate(model, opt.sim, opt.init_a, opt.init_b, coupling);
  // Under synchronous coupling an equal start stays exactly equal, so the
  // only floor is floating-point resolution relative to the state scale.
  const double scale = std::max(1.0, std::pow(spread(rec.final_a, p), p));
  const double floor = opt.floor_factor * std::pow(64.0 * std::numeric_limits<double>::epsilon(), p) * scale;
  report.tolerances = {{"p", p},
                       {"c3", model.constants.c3},
                       {"c4", model.constants.c4},
                       {"rate_tolerance", opt.rate_tolerance},
                       {"noise_floor", floor},
                       {"min_efoldings", opt.min_efoldings}};
  const auto table = gap_table(rec.rows);
  write_table_csv(out_dir / "gap.csv", table);
  finish(report, contraction_verdict(table, report.tolerances), out_dir);
  return report;
}

ExperimentReport run_invariant(const ModelSpec& model, const InvariantOptions& opt,
                               const std::filesystem::path& out_dir) {
  model.validate();
  opt.sim.validate();
  const double p = resolve_p(opt.p, model);
  require_order(p);
  if (opt.inits.size() < 2) throw ConfigError("invariant experiment needs at least two initial laws");
  std::string laws;
  for (std::size_t i = 0; i < opt.inits.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j)
      if (opt.inits[i].to_string() == opt.inits[j].to_string())
        throw ConfigError("initial laws must be distinct ('" + opt.inits[i].to_string() + "' repeats)");
    laws += (i ? "|" : "") + opt.inits[i].to_string();
  }
  const double t_end = opt.sim.t_end;
  const double t_mid = t_end - opt.delta;
  if (!(opt.delta > 0.0) || t_mid <= opt.sim.t_start)
    throw ConfigError("need t_end - delta > start time for the stationarity check");

  auto report = make_report("invariant", model, opt.sim, laws + "|" + fmt(opt.delta));
  report.inputs["initial_laws"] = laws;
  report.tolerances = {{"floor_factor", opt.floor_factor}, {"max_floor_fraction", opt.max_floor_fraction}};
  report.series = {"invariant.csv", "invariant_sample.csv", "invariant_blocks.csv"};

  std::vector<ParticleEnsemble> at_mid, at_end;
  for (std::size_t k = 0; k < opt.inits.size(); ++k) {
    SimConfig cfg = opt.sim;
    cfg.initial_law = opt.inits[k];
    cfg.seed = derive_seed(opt.sim.seed, kTagInitialLaw + k);
    cfg.snapshot_times = {t_mid, t_end};
    const auto rec = simulate(model, cfg);
    at_mid.push_back(snapshot_at(rec, t_mid, cfg.dt));
    at_end.push_back(rec.final_state);
  }

  std::vector<DistanceRow> rows;
  for (int nested = 0; nested <= 1; ++nested) {
    auto distance = [&](const ParticleEnsemble& a, const ParticleEnsemble& b) {
      return nested ? family_distance(a, b, p, opt.max_block_points) : pooled_distance(a, b, p, opt.max_pooled_points);
    };
    auto floor_of = [&](const ParticleEnsemble& e, std::size_t run) {
      return block_split_floor(e, p, nested, opt.splits, derive_seed(opt.sim.seed, run), opt.max_pooled_points,
                               opt.max_block_points);
    };
    std::vector<double> end_floor(opt.inits.size());
    for (std::size_t k = 0; k < opt.inits.size(); ++k) {
      end_floor[k] = floor_of(at_end[k], k);
      rows.push_back({double(nested), double(k), t_mid, double(k), t_end, distance(at_mid[k], at_end[k]),
                      floor_of(at_mid[k], k), spread(at_mid[k], p)});
    }
    for (std::size_t a = 0; a < opt.inits.size(); ++a)
      for (std::size_t b = a + 1; b < opt.inits.size(); ++b)
        rows.push_back({double(nested), double(a), t_end, double(b), t_end, distance(at_end[a], at_end[b]),
                        0.5 * (end_floor[a] + end_floor[b]), spread(at_end[a], p)});
  }
  const auto table = distance_table(rows);
  write_table_csv(out_dir / "invariant.csv", table);
  write_points_csv(out_dir / "invariant_sample.csv", at_end[0].pooled_measure());
  write_snapshot_csv(out_dir / "invariant_blocks.csv", at_end[0]);
  finish(report, distance_table_verdict(table, report.tolerances), out_dir);
  return report;
}

ExperimentReport run_semigroup(const ModelSpec& model, const SemigroupOptions& opt,
                               const std::filesystem::path& out_dir) {
  model.validate();
  const double p = resolve_p(opt.p, model);
  require_order(p);
  if (!(opt.s >= opt.sim.t_start && opt.s < opt.t)) throw ConfigError("semigroup check needs start <= s < t");
  SimConfig cfg = opt.sim;
  cfg.t_end = opt.t;
  cfg.snapshot_times = {opt.s};
  cfg.validate();

  auto report = make_report("semigroup", model, cfg,
                            fmt(opt.s) + "|" + fmt(opt.t) + "|" + (opt.reuse_streams ? "reuse" : "fresh"));
  report.inputs["s"] = fmt(opt.s);
  report.inputs["t"] = fmt(opt.t);
  report.inputs["streams"] = opt.reuse_streams ? "reused" : "fresh";
  report.tolerances = {{"floor_factor", opt.floor_factor}, {"max_floor_fraction", opt.max_floor_fraction}};
  report.series = {"semigroup.csv"};

  const auto single = simulate(model, cfg);
  SimConfig restart = cfg;
  restart.snapshot_times.clear();
  if (!opt.reuse_streams) restart.seed = derive_seed(cfg.seed, kTagRestart);
  const auto restarted = simulate_from(model, restart, snapshot_at(single, opt.s, cfg.dt));

  std::vector<DistanceRow> rows;
  const auto& a = single.final_state;
  const auto& b = restarted.final_state;
  for (int nested = 0; nested <= 1; ++nested) {
    const double d = nested ? family_distance(a, b, p, opt.max_block_points) : pooled_distance(a, b, p, opt.max_pooled_points);
    const double floor =
        block_split_floor(a, p, nested, opt.splits, cfg.seed, opt.max_pooled_points, opt.max_block_points);
    rows.push_back({double(nested), 0.0, opt.t, 1.0, opt.t, d, floor, spread(a, p)});
  }
  const auto table = distance_table(rows);
  write_table_csv(out_dir / "semigroup.csv", table);
  finish(report, distance_table_verdict(table, report.tolerances), out_dir);
  return report;
}

ExperimentReport run_poc(const ModelSpec& model, const PocOptions& opt, const std::filesystem::path& out_dir) {
  model.validate();
  const double p = model.constants.p;
  if (!(opt.q >= 2.0 && opt.q < p))
    throw ConfigError("propagation of chaos needs 2 <= q < p (q=" + fmt(opt.q) + ", p=" + fmt(p) + ")");
  try {
    eps_case(model.dim, p, opt.q);
  } catch (const InvalidArgumentError& e) {
    throw ConfigError(e.what());
  }
  require_increasing(opt.n_list);
  const std::size_t max_n = opt.n_list.back();
  if (opt.n_ref < std::max<std::size_t>(8 * max_n, 4096))
    throw ConfigError("N_ref must be >= max(8 * max N, 4096) = " + std::to_string(std::max<std::size_t>(8 * max_n, 4096)));

  std::string sizes;
  for (auto n : opt.n_list) sizes += std::to_string(n) + ",";
  auto report = make_report("poc", model, opt.sim, sizes + "|" + std::to_string(opt.n_ref) + "|" + fmt(opt.q));
  report.inputs["n_list"] = sizes.substr(0, sizes.size() - 1);
  report.inputs["n_ref"] = std::to_string(opt.n_ref);
  report.tolerances = {{"slope_tolerance", opt.slope_tolerance}};
  report.series = {"poc.csv"};

  SimConfig cfg = opt.sim;
  cfg.particles = opt.n_ref;
  cfg.validate();
  ParticleEnsemble ref = initialize_ensemble(model, cfg);
  std::vector<ParticleEnsemble> ips;
  for (auto n : opt.n_list) {
    SimConfig c = cfg;
    c.particles = n;
    ips.push_back(initialize_ensemble(model, c));
  }
  const std::size_t m = cfg.blocks, d = model.dim;
  std::vector<double> strong(ips.size(), 0.0), measure(ips.size(), 0.0);
  auto record = [&] {
    for (std::size_t k = 0; k < ips.size(); ++k) {
      const std::size_t n = opt.n_list[k];
      std::vector<double> block_strong(m), block_measure(m), values(n);
      for (std::size_t b = 0; b < m; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
          const auto x = ips[k].particle(b, i), y = ref.particle(b, i);
          double sq = 0.0;
          for (std::size_t j = 0; j < d; ++j) sq += (x[j] - y[j]) * (x[j] - y[j]);
          values[i] = std::pow(sq, 0.5 * opt.q);
        }
        block_strong[b] = reproducible_sum(values) / static_cast<double>(n);
        block_measure[b] = d == 1 ? transport_cost(ref.block_measure(b), ips[k].block_measure(b), opt.q) : kNaN;
      }
      strong[k] = std::max(strong[k], reproducible_sum(block_strong) / static_cast<double>(m));
      measure[k] = d == 1 ? std::max(measure[k], reproducible_sum(block_measure) / static_cast<double>(m)) : kNaN;
    }
  };
  const StepParams params{cfg.dt, cfg.taming, cfg.seed, StepParams::Noise::Philox};
  const std::uint64_t steps = cfg.total_steps();
  record();
  for (std::uint64_t done = 0; done < steps;) {
    const std::uint64_t chunk = std::min<std::uint64_t>(cfg.record_every, steps - done);
    advance(ref, model, params, chunk, cfg.threads);
    for (auto& e : ips) advance(e, model, params, chunk, cfg.threads);
    done += chunk;
    record();
  }
  if (d != 1) report.notes.push_back("err_measure is only computed in one dimension (unequal sample sizes)");

  Table table{{"N", "q", "err_strong", "err_measure", "eps_theory"}, {}};
  for (std::size_t k = 0; k < ips.size(); ++k) {
    const double n = static_cast<double>(opt.n_list[k]);
    table.add_row({n, opt.q, strong[k], measure[k], eps_n(model.dim, p, opt.q, n)});
  }
  write_table_csv(out_dir / "poc.csv", table);
  finish(report, poc_verdict(table, report.tolerances), out_dir);
  return report;
}

ExperimentReport run_convergence_to_invariant(const ModelSpec& model, const ConvergenceOptions& opt,
                                              const std::filesystem::path& out_dir) {
  model.validate();
  require_order(opt.q);
  require_increasing(opt.n_list);
  const auto sample_path = opt.invariant_dir / "invariant_sample.csv";
  const auto blocks_path = opt.invariant_dir / "invariant_blocks.csv";
  if (!std::filesystem::exists(sample_path) || !std::filesystem::exists(blocks_path))
    throw ConfigError("no stored invariant estimate in '" + opt.invariant_dir.string() +
                      "' (run the invariant experiment first)");
  const auto u_star = point_file_measure(read_point_csv(sample_path));
  const auto mu_star = point_file_ensemble(read_point_csv(blocks_path));
  if (u_star.dim() != model.dim) throw ConfigError("stored invariant sample has the wrong dimension");

  std::string sizes;
  for (auto n : opt.n_list) sizes += std::to_string(n) + ",";
  auto report = make_report("convergence_to_invariant", model, opt.sim, sizes + "|" + fmt(opt.q));
  report.inputs["n_list"] = sizes.substr(0, sizes.size() - 1);
  report.inputs["invariant_dir"] = opt.invariant_dir.string();
  report.tolerances = {{"floor_factor", opt.floor_factor}};
  report.series = {"converge.csv"};

  Table table{{"N", "q", "w_pooled", "nested", "floor_pooled", "floor_nested", "pooled_variance"}, {}};
  for (auto n : opt.n_list) {
    SimConfig cfg = opt.sim;
    cfg.particles = n;
    const auto final_state = simulate(model, cfg).final_state;

    double w = 0.0;
    if (model.dim == 1) {
      w = wasserstein_p(final_state.pooled_measure(), u_star, opt.q);
    } else {
      const auto mine = final_state.pooled_measure(std::min(opt.max_pooled_points, u_star.size()));
      w = wasserstein_p(mine, strided_subsample(u_star, mine.size()), opt.q);
    }
    const std::size_t members = std::min(final_state.blocks(), mu_star.size());
    const std::size_t k = model.dim == 1 ? SIZE_MAX : opt.max_block_points;
    std::vector<EmpiricalMeasure> mine, theirs;
    for (std::size_t b = 0; b < members; ++b) {
      mine.push_back(final_state.block_measure(b, k));
      const auto& member = mu_star.member(b);
      theirs.push_back(model.dim == 1 ? member : prefix_subsample(member, std::min(k, member.size())));
    }
    if (model.dim != 1) {
      for (std::size_t b = 0; b < members; ++b) {
        const std::size_t common = std::min(mine[b].size(), theirs[b].size());
        mine[b] = prefix_subsample(mine[b], common);
        theirs[b] = prefix_subsample(theirs[b], common);
      }
    }
    const double nested =
        nested_wasserstein(MeasureEnsemble(std::move(mine)), MeasureEnsemble(std::move(theirs)), opt.q);

    const auto pooled = final_state.pooled_measure();
    std::vector<double> coord(pooled.size());
    double variance = 0.0;
    for (std::size_t j = 0; j < model.dim; ++j) {
      for (std::size_t i = 0; i < pooled.size(); ++i) coord[i] = pooled.point(i)[j];
      const double s = sample_stddev(coord);
      variance += s * s;
    }
    table.add_row({static_cast<double>(n), opt.q, w, nested,
                   block_split_floor(final_state, opt.q, false, opt.splits, cfg.seed, opt.max_pooled_points,
                                     opt.max_block_points),
                   block_split_floor(final_state, opt.q, true, opt.splits, cfg.seed, opt.max_pooled_points,
                                     opt.max_block_points),
                   variance});
  }
  write_table_csv(out_dir / "converge.csv", table);
  finish(report, convergence_verdict(table, report.tolerances), out_dir);
  return report;
}

}  // namespace mvcn
