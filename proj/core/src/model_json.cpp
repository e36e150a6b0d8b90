#include "mvcn/model_json.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mvcn/error.hpp"

namespace mvcn {
namespace {

using nlohmann::json;

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ModelDefinitionError(where + ": missing \"" + key + "\"");
  return j.at(key);
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ModelDefinitionError(where + ": expected a number");
  return j.get<double>();
}

Matrix matrix_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ModelDefinitionError(where + ": expected a non-empty array of rows");
  Matrix m(j.size(), j[0].size());
  for (std::size_t r = 0; r < m.rows; ++r) {
    if (!j[r].is_array() || j[r].size() != m.cols) throw ModelDefinitionError(where + ": ragged matrix");
    for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = number(j[r][c], where);
  }
  return m;
}

json matrix_to(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return rows;
}

std::vector<Matrix> matrices_from(const json& j, const std::string& where) {
  if (!j.is_array()) throw ModelDefinitionError(where + ": expected an array of matrices");
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(matrix_from(j[k], where + "[" + std::to_string(k) + "]"));
  return out;
}

json matrices_to(const std::vector<Matrix>& ms) {
  json out = json::array();
  for (const auto& m : ms) out.push_back(matrix_to(m));
  return out;
}

Polynomial polynomial_from(const json& j, const std::string& where) {
  if (!j.is_array()) throw ModelDefinitionError(where + ": expected an array of monomials");
  Polynomial p;
  for (const auto& t : j) {
    Monomial m;
    m.coeff = number(require(t, "coeff", where), where + ".coeff");
    const auto& e = require(t, "exponents", where);
    if (!e.is_array()) throw ModelDefinitionError(where + ".exponents: expected an array");
    for (const auto& v : e) {
      if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ModelDefinitionError(where + ".exponents: expected non-negative integers");
      m.exponents.push_back(v.get<unsigned>());
    }
    p.terms.push_back(std::move(m));
  }
  return p;
}

json polynomial_to(const Polynomial& p) {
  json out = json::array();
  for (const auto& m : p.terms) out.push_back({{"coeff", m.coeff}, {"exponents", m.exponents}});
  return out;
}

AffineMatrixField field_from(const json& j, std::size_t dim, const std::string& where) {
  AffineMatrixField f;
  if (j.is_null()) {
    f.constant = Matrix(dim, dim);
    return f;
  }
  if (!j.is_object()) throw ModelDefinitionError(where + ": expected an object");
  f.constant = j.contains("constant") ? matrix_from(j.at("constant"), where + ".constant") : Matrix(dim, dim);
  if (j.contains("linear")) f.linear = matrices_from(j.at("linear"), where + ".linear");
  if (j.contains("mean_field")) {
    for (const auto& t : j.at("mean_field")) {
      DiffusionMeanFieldTerm term;
      term.functional = require(t, "functional", where).get<std::size_t>();
      term.weights = matrices_from(require(t, "weights", where), where + ".weights");
      f.terms.push_back(std::move(term));
    }
  }
  return f;
}

json field_to(const AffineMatrixField& f) {
  json out = {{"constant", matrix_to(f.constant)}};
  if (!f.linear.empty()) out["linear"] = matrices_to(f.linear);
  if (!f.terms.empty()) {
    json terms = json::array();
    for (const auto& t : f.terms) terms.push_back({{"functional", t.functional}, {"weights", matrices_to(t.weights)}});
    out["mean_field"] = terms;
  }
  return out;
}

ModelSpec model_from(const json& j) {
  if (!j.is_object()) throw ModelDefinitionError("model: expected a JSON object");
  ModelSpec m;
  m.name = j.value("name", std::string("custom"));
  const auto& dim = require(j, "dim", "model");
  if (!dim.is_number_integer() || dim.get<long long>() < 1)
    throw ModelDefinitionError("model.dim: expected a positive integer");
  m.dim = dim.get<std::size_t>();

  if (j.contains("functionals")) {
    for (const auto& fj : j.at("functionals")) {
      MeanFieldFunctional f;
      const std::string kind = require(fj, "kind", "functional").get<std::string>();
      if (kind == "expectation_linear") {
        f.kind = MeanFieldFunctional::Kind::ExpectationLinear;
        f.matrix = fj.contains("matrix") ? matrix_from(fj.at("matrix"), "functional.matrix") : Matrix::identity(m.dim);
      } else if (kind == "w2_to_dirac") {
        f.kind = MeanFieldFunctional::Kind::W2ToDirac;
      } else if (kind == "custom_moment") {
        f.kind = MeanFieldFunctional::Kind::CustomMoment;
        f.phi = polynomial_from(require(fj, "phi", "functional"), "functional.phi");
      } else {
        throw ModelDefinitionError("functional kind '" + kind +
                                   "' unknown (expectation_linear, w2_to_dirac, custom_moment)");
      }
      m.functionals.push_back(std::move(f));
    }
  } else {
    m.functionals.push_back(MeanFieldFunctional::mean(m.dim));
  }

  const auto& drift = require(j, "drift", "model");
  const auto& poly = require(drift, "polynomial", "model.drift");
  if (!poly.is_array()) throw ModelDefinitionError("model.drift.polynomial: expected one polynomial per component");
  for (std::size_t k = 0; k < poly.size(); ++k)
    m.drift.components.push_back(polynomial_from(poly[k], "drift.polynomial[" + std::to_string(k) + "]"));
  if (drift.contains("mean_field")) {
    for (const auto& t : drift.at("mean_field")) {
      DriftMeanFieldTerm term;
      term.functional = require(t, "functional", "drift.mean_field").get<std::size_t>();
      term.weights = matrix_from(require(t, "weights", "drift.mean_field"), "drift.mean_field.weights");
      m.drift.terms.push_back(std::move(term));
    }
  }
  m.diff_idio = field_from(j.value("diff_idio", json()), m.dim, "diff_idio");
  m.diff_common = field_from(j.value("diff_common", json()), m.dim, "diff_common");

  const auto& c = require(j, "constants", "model");
  auto get = [&](const char* key, double fallback, bool required) {
    if (!c.contains(key)) {
      if (required) throw ModelDefinitionError(std::string("model.constants: missing \"") + key + "\"");
      return fallback;
    }
    return number(c.at(key), std::string("constants.") + key);
  };
  m.constants.c1 = get("c1", 0, true);
  m.constants.c2 = get("c2", 0, true);
  m.constants.c3 = get("c3", 0, true);
  m.constants.c4 = get("c4", 0, true);
  m.constants.c5 = get("c5", 0.0, false);
  m.constants.l = get("l", 0, true);
  m.constants.p = get("p", 0, true);
  m.validate();
  return m;
}

}  // namespace

ModelSpec model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ModelDefinitionError(std::string("model JSON: ") + e.what());
  }
  try {
    return model_from(j);
  } catch (const json::exception& e) {
    throw ModelDefinitionError(std::string("model JSON: ") + e.what());
  }
}

std::string model_to_json(const ModelSpec& m) {
  json funcs = json::array();
  for (const auto& f : m.functionals) {
    switch (f.kind) {
      case MeanFieldFunctional::Kind::ExpectationLinear:
        funcs.push_back({{"kind", "expectation_linear"}, {"matrix", matrix_to(f.matrix)}});
        break;
      case MeanFieldFunctional::Kind::W2ToDirac:
        funcs.push_back({{"kind", "w2_to_dirac"}});
        break;
      case MeanFieldFunctional::Kind::CustomMoment:
        funcs.push_back({{"kind", "custom_moment"}, {"phi", polynomial_to(f.phi)}});
        break;
    }
  }
  json poly = json::array();
  for (const auto& p : m.drift.components) poly.push_back(polynomial_to(p));
  json drift = {{"polynomial", poly}};
  if (!m.drift.terms.empty()) {
    json terms = json::array();
    for (const auto& t : m.drift.terms) terms.push_back({{"functional", t.functional}, {"weights", matrix_to(t.weights)}});
    drift["mean_field"] = terms;
  }
  const auto& c = m.constants;
  json out = {{"name", m.name},
              {"dim", m.dim},
              {"functionals", funcs},
              {"drift", drift},
              {"diff_idio", field_to(m.diff_idio)},
              {"diff_common", field_to(m.diff_common)},
              {"constants", {{"c1", c.c1}, {"c2", c.c2}, {"c3", c.c3}, {"c4", c.c4}, {"c5", c.c5}, {"l", c.l}, {"p", c.p}}}};
  return out.dump();
}

std::string sim_config_to_json(const SimConfig& cfg) {
  nlohmann::ordered_json j;
  j["dt"] = cfg.dt;
  j["t_start"] = cfg.t_start;
  j["t_end"] = cfg.t_end;
  j["particles"] = cfg.particles;
  j["blocks"] = cfg.blocks;
  j["seed"] = cfg.seed;
  j["taming"] = cfg.taming;
  j["record_every"] = cfg.record_every;
  j["snapshot_every"] = cfg.snapshot_every;
  j["snapshot_times"] = cfg.snapshot_times;
  j["initial_law"] = cfg.initial_law.to_string();
  j["moment_p"] = cfg.moment_p;
  j["track"] = cfg.track;
  j["step_offset"] = cfg.step_offset;
  return j.dump();
}

SimConfig sim_config_from_json(const std::string& text, std::size_t dim, SimConfig base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sim config JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("sim config: expected a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "dt") base.dt = v.get<double>();
      else if (key == "t_start") base.t_start = v.get<double>();
      else if (key == "t_end") base.t_end = v.get<double>();
      else if (key == "particles") base.particles = v.get<std::size_t>();
      else if (key == "blocks") base.blocks = v.get<std::size_t>();
      else if (key == "seed") base.seed = v.get<std::uint64_t>();
      else if (key == "taming") base.taming = v.get<bool>();
      else if (key == "record_every") base.record_every = v.get<std::size_t>();
      else if (key == "snapshot_every") base.snapshot_every = v.get<double>();
      else if (key == "snapshot_times") base.snapshot_times = v.get<std::vector<double>>();
      else if (key == "initial_law") base.initial_law = InitialLaw::parse(v.get<std::string>(), dim);
      else if (key == "moment_p") base.moment_p = v.get<double>();
      else if (key == "track") base.track = v.get<std::size_t>();
      else if (key == "step_offset") base.step_offset = v.get<std::uint64_t>();
      else if (key == "threads") base.threads = v.get<unsigned>();
      else throw ConfigError("sim config: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sim config: ") + e.what());
  }
  base.validate();
  return base;
}

ModelSpec load_model_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read model file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace mvcn
