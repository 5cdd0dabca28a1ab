#pragma once

#include "pwadeepc/pwa_system.hpp"

#include <json.hpp>

#include <string>

namespace pwadeepc {

using Json = nlohmann::json;

/// {"rows": r, "cols": c, "data": [row-major]}
Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

Json polyhedron_to_json(const Polyhedron& p);
Polyhedron polyhedron_from_json(const Json& j);

/**
 * Schema:
 * {
 *   "type": "pwa_state_space", "nx": .., "nu": .., "ny": ..,
 *   "modes": [{"A": M, "B": M, "C": M, "D": M, "f": V, "g": V}, ...],
 *   "partition": [{"coefficients": M, "strict": [bool, ...]}, ...]
 * }
 * where M is a matrix object and V a plain array.
 */
Json system_to_json(const PwaStateSpace& sys);
PwaStateSpace system_from_json(const Json& j);

/**
 * Schema:
 * {
 *   "type": "pwarx", "ny": .., "nu": .., "lag": ..,
 *   "modes": [{"a": [M, ...], "b": [M, ...], "c": V}, ...],
 *   "partition": [...]
 * }
 */
Json pwarx_to_json(const PwarxModel& model);
PwarxModel pwarx_from_json(const Json& j);

/// Dump with full round-trip precision, 2-space indent and a trailing newline.
std::string dump_json(const Json& j);

/// Read and parse a JSON file; throws Io on failure.
Json read_json_file(const std::string& path);

}  // namespace pwadeepc
