#pragma once

#include <filesystem>
#include <string>

#include "mvcn/model.hpp"
#include "mvcn/simulate.hpp"

namespace mvcn {

/// Parses a model document:
///   {"name": "...", "dim": d,
///    "functionals": [{"kind": "expectation_linear", "matrix": [[...]]},
///                    {"kind": "w2_to_dirac"},
///                    {"kind": "custom_moment", "phi": [{"coeff": c, "exponents": [...]}]}],
///    "drift": {"polynomial": [[monomial, ...] per component],
///              "mean_field": [{"functional": k, "weights": [[...]]}]},
///    "diff_idio":   {"constant": [[...]], "linear": [[[...]], ...],
///                    "mean_field": [{"functional": k, "weights": [[[...]], ...]}]},
///    "diff_common": {...},
///    "constants": {"c1", "c2", "c3", "c4", "c5", "l", "p"}}
/// "functionals" defaults to the mean. Throws ModelDefinitionError.
ModelSpec model_from_json(const std::string& text);

/// Inverse of model_from_json (compact JSON text).
std::string model_to_json(const ModelSpec& model);

ModelSpec load_model_file(const std::filesystem::path& path);

/// Simulation settings as JSON: dt, t_start, t_end, particles, blocks, seed,
/// taming, record_every, snapshot_every, snapshot_times, initial_law,
/// moment_p, track, step_offset. Thread count is not part of it because it
/// never changes results.
std::string sim_config_to_json(const SimConfig& cfg);

/// Overrides the fields present in `text` on top of `base`; `dim` resolves
/// broadcast initial laws. Throws ConfigError on unknown keys or bad types.
SimConfig sim_config_from_json(const std::string& text, std::size_t dim, SimConfig base = {});

}  // namespace mvcn
