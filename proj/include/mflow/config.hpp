#pragma once

#include <string>

#include <json.hpp>

#include "mflow/decomp.hpp"
#include "mflow/density.hpp"
#include "mflow/fields.hpp"
#include "mflow/grid.hpp"
#include "mflow/sim.hpp"

namespace mflow {

/// Reads and validates a config file (schema_version 1). Throws Error with
/// code CONFIG_MISSING / CONFIG_INVALID and the offending field name.
nlohmann::json load_config(const std::string& path);

/// FNV-1a hash of the canonical (sorted-key) serialization, as hex.
std::string config_hash(const nlohmann::json& j);

const nlohmann::json& require_field(const nlohmann::json& j, const std::string& field);

Schedule parse_schedule(const nlohmann::json& j, const std::string& field);
DensityPath parse_density(const nlohmann::json& density_cfg);
RegularGrid parse_grid(const nlohmann::json& grid_cfg);

/// Field config for a given usage position; a declared "role" must agree
/// with the position.
MatrixField parse_field(const nlohmann::json& field_cfg, int dim, FieldRole position_role,
                        const std::string& field_name);

SimConfig parse_sim(const nlohmann::json& sim_cfg);

/// Builds the SDE described under "sde"; assembled drifts pull phi from a
/// constant, from MFLO files (paths relative to base_dir), or are left to the
/// caller via the returned needs list. The density argument supplies scores.
SdeSpec parse_sde(const nlohmann::json& sde_cfg, const DensityPath& density,
                  const std::string& base_dir);

DensityPath builtin_density(const std::string& name, int d);

}  // namespace mflow
