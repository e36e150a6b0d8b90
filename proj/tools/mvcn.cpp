// mvcn: simulate McKean-Vlasov particle systems with common noise, run the
// experiment harnesses and compute Wasserstein distances between point files.
//
// Exit codes
//   simulate     0 ok, 1 configuration error, 2 blow-up
//   experiment   0 pass, 3 fail, 4 inconclusive, 1 configuration error
//   wasserstein  0 ok, 1 error
//   models       0

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mvcn/csv_io.hpp"
#include "mvcn/error.hpp"
#include "mvcn/experiments.hpp"
#include "mvcn/measure.hpp"
#include "mvcn/model.hpp"
#include "mvcn/model_json.hpp"
#include "mvcn/report.hpp"
#include "mvcn/simulate.hpp"

#ifndef MVCN_VERSION
#define MVCN_VERSION "dev"
#endif

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace mvcn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitBlowUp = 2;

// Command-line values; unset optionals leave the config file or defaults alone.
struct Flags {
  std::string model;
  std::string config;
  std::vector<std::string> params;
  std::optional<std::size_t> particles, blocks, record_every, track, n_ref;
  std::optional<double> dt, t_end, snapshot_every, q, s, t, p;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> snapshot_times, n_list, init_a, init_b, invariant_dir;
  std::vector<std::string> inits;
  bool no_taming = false;
  bool reuse_streams = false;
  unsigned threads = 1;
  std::string out;
  std::string exp;
};

// Everything needed to rerun a command; stored as manifest["config"].
struct RunConfig {
  ordered_json model;  // builtin name or model object
  std::map<std::string, double> params;
  ModelSpec spec;
  SimConfig sim;
  ordered_json experiment = ordered_json::object();
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

std::vector<double> parse_doubles(const std::string& text, const char* what) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0') throw ConfigError(std::string(what) + ": bad number '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  for (double v : parse_doubles(text, what)) {
    if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v)))
      throw ConfigError(std::string(what) + ": expected positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

ordered_json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const ordered_json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Experiment defaults differ from plain simulation defaults.
void apply_experiment_defaults(const std::string& exp, SimConfig& sim, ordered_json& e) {
  if (exp == "moments") {
    sim.t_end = 25.0;
    sim.particles = 2000;
    sim.blocks = 10;
  } else if (exp == "contraction") {
    sim.t_end = 10.0;
    sim.particles = 2000;
    sim.blocks = 20;
    e["init_a"] = "gauss:10,1";
    e["init_b"] = "gauss:-2,1";
  } else if (exp == "invariant") {
    sim.t_end = 25.0;
    sim.particles = 1000;
    sim.blocks = 20;
    e["inits"] = {"gauss:10,1", "gauss:2,1", "gauss:-2,1"};
  } else if (exp == "semigroup") {
    sim.particles = 2000;
    sim.blocks = 10;
    e["s"] = 1.0;
    e["t"] = 3.0;
    e["reuse_streams"] = false;
  } else if (exp == "poc") {
    sim.t_end = 5.0;
    sim.blocks = 8;
    e["q"] = 2.0;
    e["n_list"] = {16, 64, 256, 1024};
    e["n_ref"] = 8192;
  } else if (exp == "converge-invariant") {
    sim.t_end = 25.0;
    sim.blocks = 20;
    e["q"] = 2.0;
    e["n_list"] = {32, 128, 512};
  } else {
    throw ConfigError("unknown experiment '" + exp +
                      "' (moments, contraction, invariant, semigroup, poc, converge-invariant)");
  }
  e["exp"] = exp;
}

// defaults -> config file (or a manifest's "config") -> flags
RunConfig resolve(const Flags& f, bool experiment) {
  RunConfig rc;
  ordered_json file = ordered_json::object();
  if (!f.config.empty()) {
    file = read_json_file(f.config);
    if (file.contains("config")) file = file["config"];
    if (!file.is_object()) throw ConfigError(f.config + ": expected a JSON object");
  }

  if (!f.model.empty()) {
    if (fs::exists(f.model) && fs::path(f.model).extension() == ".json")
      rc.model = read_json_file(f.model);
    else
      rc.model = f.model;
  } else if (file.contains("model")) {
    rc.model = file["model"];
  } else {
    std::string names;
    for (const auto& n : builtin_model_names()) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("missing --model (builtin models: " + names + ")");
  }
  if (file.contains("params")) rc.params = file["params"].get<std::map<std::string, double>>();
  for (const auto& kv : f.params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--param expects key=value, got '" + kv + "'");
    rc.params[kv.substr(0, eq)] = parse_doubles(kv.substr(eq + 1), "--param").at(0);
  }
  if (rc.model.is_string()) {
    rc.spec = builtin_model(rc.model.get<std::string>(), rc.params);
  } else {
    if (!rc.params.empty()) throw ConfigError("--param only applies to builtin models");
    rc.spec = model_from_json(rc.model.dump());
  }

  std::string exp = f.exp;
  if (experiment && exp.empty() && file.contains("experiment") && file["experiment"].contains("exp"))
    exp = file["experiment"]["exp"].get<std::string>();
  if (experiment) {
    if (exp.empty()) throw ConfigError("missing --exp");
    apply_experiment_defaults(exp, rc.sim, rc.experiment);
  }
  if (file.contains("sim")) rc.sim = sim_config_from_json(file["sim"].dump(), rc.spec.dim, rc.sim);
  if (experiment && file.contains("experiment"))
    for (const auto& [k, v] : file["experiment"].items()) rc.experiment[k] = v;
  if (experiment) rc.experiment["exp"] = exp;

  auto& sim = rc.sim;
  if (f.particles) sim.particles = *f.particles;
  if (f.blocks) sim.blocks = *f.blocks;
  if (f.dt) sim.dt = *f.dt;
  if (f.t_end) sim.t_end = *f.t_end;
  if (f.seed) sim.seed = *f.seed;
  if (f.record_every) sim.record_every = *f.record_every;
  if (f.snapshot_every) sim.snapshot_every = *f.snapshot_every;
  if (f.snapshot_times) sim.snapshot_times = parse_doubles(*f.snapshot_times, "--snapshot-times");
  if (f.track) sim.track = *f.track;
  if (f.no_taming) sim.taming = false;
  sim.threads = f.threads;

  auto& e = rc.experiment;
  if (experiment && exp == "invariant") {
    if (!f.inits.empty()) e["inits"] = f.inits;
  } else if (!f.inits.empty()) {
    if (f.inits.size() != 1) throw ConfigError("--init given more than once");
    sim.initial_law = InitialLaw::parse(f.inits.front(), rc.spec.dim);
  }
  if (experiment) {
    if (f.q) e["q"] = *f.q;
    if (f.n_list) e["n_list"] = parse_sizes(*f.n_list, "--n-list");
    if (f.n_ref) e["n_ref"] = *f.n_ref;
    if (f.init_a) e["init_a"] = *f.init_a;
    if (f.init_b) e["init_b"] = *f.init_b;
    if (f.s) e["s"] = *f.s;
    if (f.t) e["t"] = *f.t;
    if (f.p) e["p"] = *f.p;
    if (f.invariant_dir) e["invariant_dir"] = *f.invariant_dir;
    if (f.reuse_streams) e["reuse_streams"] = true;
  }
  sim.validate();
  return rc;
}

ordered_json config_json(const RunConfig& rc) {
  ordered_json j;
  j["model"] = rc.model;
  if (!rc.params.empty()) j["params"] = rc.params;
  j["sim"] = ordered_json::parse(sim_config_to_json(rc.sim));
  if (!rc.experiment.empty()) j["experiment"] = rc.experiment;
  return j;
}

fs::path output_dir(const Flags& f, const std::string& command, const RunConfig& rc) {
  if (!f.out.empty()) return f.out;
  const char* root = std::getenv("MVCN_OUT_DIR");
  const std::string name = command + "-" + rc.spec.name + "-" + digest(config_json(rc).dump()).substr(0, 8);
  return fs::path(root && *root ? root : "mvcn_runs") / name;
}

ordered_json manifest(const std::string& command, const Flags& f, const RunConfig& rc, const fs::path& out) {
  ordered_json m;
  m["command"] = command;
  m["config_path"] = f.config;
  m["model"] = rc.spec.name;
  m["seed"] = rc.sim.seed;
  m["output_dir"] = out.string();
  m["tool_version"] = MVCN_VERSION;
  m["threads"] = rc.sim.threads;
  m["config"] = config_json(rc);
  m["runtime_seconds"] = nullptr;
  return m;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int cmd_simulate(const Flags& f) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig rc = resolve(f, false);
  const fs::path out = output_dir(f, "simulate", rc);
  auto m = manifest("simulate", f, rc, out);
  write_json_file(out / "manifest.json", m);
  int code = kExitOk;
  try {
    const auto rec = simulate(rc.spec, rc.sim);
    for (const auto& w : rec.warnings) std::cerr << "warning: " << w << '\n';
    write_trajectory(out, rec);
    m["status"] = "ok";
  } catch (const BlowUpError& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (e.partial()) write_trajectory(out, *e.partial());
    m["status"] = "blow_up";
    code = kExitBlowUp;
  }
  m["runtime_seconds"] = seconds_since(start);
  write_json_file(out / "manifest.json", m);
  std::cout << out.string() << '\n';
  return code;
}

InitialLaw law_from(const ordered_json& e, const char* key, std::size_t dim) {
  if (!e.contains(key)) throw ConfigError(std::string("experiment needs '") + key + "'");
  return InitialLaw::parse(e[key].get<std::string>(), dim);
}

std::vector<std::size_t> sizes_from(const ordered_json& e) {
  if (!e.contains("n_list")) throw ConfigError("experiment needs --n-list");
  return e["n_list"].get<std::vector<std::size_t>>();
}

ExperimentReport dispatch(const RunConfig& rc, const fs::path& out) {
  const auto& e = rc.experiment;
  const std::string exp = e.at("exp").get<std::string>();
  const std::size_t dim = rc.spec.dim;
  const double p = e.value("p", 0.0);
  if (exp == "moments") {
    MomentBoundOptions o;
    o.sim = rc.sim;
    if (p > 0.0) o.sim.moment_p = p;
    return run_moment_bound(rc.spec, o, out);
  }
  if (exp == "contraction") {
    ContractionOptions o;
    o.sim = rc.sim;
    o.init_a = law_from(e, "init_a", dim);
    o.init_b = law_from(e, "init_b", dim);
    o.p = p;
    return run_contraction(rc.spec, o, out);
  }
  if (exp == "invariant") {
    InvariantOptions o;
    o.sim = rc.sim;
    o.p = p;
    for (const auto& s : e.at("inits")) o.inits.push_back(InitialLaw::parse(s.get<std::string>(), dim));
    return run_invariant(rc.spec, o, out);
  }
  if (exp == "semigroup") {
    SemigroupOptions o;
    o.sim = rc.sim;
    o.s = e.value("s", 1.0);
    o.t = e.value("t", 3.0);
    o.reuse_streams = e.value("reuse_streams", false);
    o.p = p;
    return run_semigroup(rc.spec, o, out);
  }
  if (exp == "poc") {
    PocOptions o;
    o.sim = rc.sim;
    o.q = e.value("q", 2.0);
    o.n_list = sizes_from(e);
    o.n_ref = e.value("n_ref", std::size_t{8192});
    return run_poc(rc.spec, o, out);
  }
  ConvergenceOptions o;
  o.sim = rc.sim;
  o.q = e.value("q", 2.0);
  o.n_list = sizes_from(e);
  if (!e.contains("invariant_dir")) throw ConfigError("converge-invariant needs --invariant-dir");
  o.invariant_dir = e["invariant_dir"].get<std::string>();
  return run_convergence_to_invariant(rc.spec, o, out);
}

int cmd_experiment(const Flags& f) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig rc = resolve(f, true);
  const fs::path out = output_dir(f, rc.experiment.at("exp").get<std::string>(), rc);
  auto m = manifest("experiment", f, rc, out);
  write_json_file(out / "manifest.json", m);
  Verdict verdict = Verdict::Fail;
  try {
    const auto report = dispatch(rc, out);
    verdict = report.verdict;
    std::cout << report.name << ": " << to_string(verdict) << '\n';
    for (const auto& [k, v] : report.fitted) std::cout << "  " << k << " = " << format_double(v) << '\n';
    for (const auto& n : report.notes) std::cout << "  note: " << n << '\n';
  } catch (const BlowUpError& e) {
    std::cerr << "error: " << e.what() << '\n';
    verdict = Verdict::Fail;
  }
  m["verdict"] = to_string(verdict);
  m["runtime_seconds"] = seconds_since(start);
  write_json_file(out / "manifest.json", m);
  std::cout << out.string() << '\n';
  return exit_code(verdict);
}

int cmd_wasserstein(const std::string& a, const std::string& b, double p, bool nested) {
  const auto fa = read_point_csv(a);
  const auto fb = read_point_csv(b);
  if (fa.dim != fb.dim)
    throw DimensionMismatchError("point files have different dimensions (" + std::to_string(fa.dim) + " vs " +
                                 std::to_string(fb.dim) + ")");
  const double w = nested ? nested_wasserstein(point_file_ensemble(fa), point_file_ensemble(fb), p)
                          : wasserstein_p(point_file_measure(fa), point_file_measure(fb), p);
  std::printf("%.12g\n", w);
  return kExitOk;
}

int cmd_models() {
  std::printf("%-14s %3s %8s %8s %8s %8s %8s %5s %5s\n", "name", "dim", "c1", "c2", "c3", "c4", "c5", "l", "p");
  for (const auto& name : builtin_model_names()) {
    const auto m = builtin_model(name);
    const auto& c = m.constants;
    std::printf("%-14s %3zu %8g %8g %8g %8g %8g %5g %5g\n", name.c_str(), m.dim, c.c1, c.c2, c.c3, c.c4, c.c5, c.l,
                c.p);
  }
  return kExitOk;
}

void add_run_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--model", f.model, "Builtin model name or model JSON file");
  cmd->add_option("--config", f.config, "Config JSON (or a previous run's manifest.json)");
  cmd->add_option("--param", f.params, "Builtin model parameter override, key=value (repeatable)");
  cmd->add_option("--particles", f.particles, "Particles per block (N)");
  cmd->add_option("--blocks", f.blocks, "Independent common-noise blocks (M)");
  cmd->add_option("--dt", f.dt, "Time step");
  cmd->add_option("--t-end", f.t_end, "Final time");
  cmd->add_option("--seed", f.seed, "Seed for all randomness");
  cmd->add_option("--threads", f.threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "Output directory (default $MVCN_OUT_DIR/<name>)");
  cmd->add_option("--record-every", f.record_every, "Steps between moment records");
  cmd->add_option("--snapshot-times", f.snapshot_times, "Comma-separated snapshot times");
  cmd->add_option("--snapshot-every", f.snapshot_every, "Time between snapshots");
  cmd->add_option("--track", f.track, "Particles per block written to paths.csv");
  cmd->add_option("--init", f.inits, "Initial law: gauss:m,s | point:x1,... | csv:PATH");
  cmd->add_flag("--no-taming", f.no_taming, "Plain Euler-Maruyama drift");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"McKean-Vlasov particle simulation with common noise"};
  app.set_version_flag("--version", MVCN_VERSION);
  app.require_subcommand(1);

  Flags f;
  auto* sim = app.add_subcommand("simulate", "Run the particle system and write CSV records");
  add_run_flags(sim, f);

  auto* exp = app.add_subcommand("experiment", "Run an experiment harness and write report.json");
  add_run_flags(exp, f);
  exp->add_option("--exp", f.exp, "moments | contraction | invariant | semigroup | poc | converge-invariant");
  exp->add_option("--q", f.q, "Error order q");
  exp->add_option("--n-list", f.n_list, "Comma-separated particle counts");
  exp->add_option("--n-ref", f.n_ref, "Reference particle count");
  exp->add_option("--init-a", f.init_a, "First initial law (contraction)");
  exp->add_option("--init-b", f.init_b, "Second initial law (contraction)");
  exp->add_option("--s", f.s, "Restart time (semigroup)");
  exp->add_option("--t", f.t, "Comparison time (semigroup)");
  exp->add_option("--p", f.p, "Distance / moment order (default: model p)");
  exp->add_option("--invariant-dir", f.invariant_dir, "Output directory of an invariant run");
  exp->add_flag("--reuse-streams", f.reuse_streams, "Semigroup restart continues the same noise streams");

  std::string wa, wb;
  double wp = 2.0;
  bool nested = false;
  auto* was = app.add_subcommand("wasserstein", "W_p between two point CSV files");
  was->add_option("--a", wa, "First point file")->required();
  was->add_option("--b", wb, "Second point file")->required();
  was->add_option("--p", wp, "Order p >= 1");
  was->add_flag("--nested", nested, "Nested distance between block_id groups");

  auto* models = app.add_subcommand("models", "List builtin models and their constants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*sim) return cmd_simulate(f);
    if (*exp) return cmd_experiment(f);
    if (*was) return cmd_wasserstein(wa, wb, wp, nested);
    if (*models) return cmd_models();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (*sim) std::cerr << sim->help();
    if (*exp) std::cerr << exp->help();
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
