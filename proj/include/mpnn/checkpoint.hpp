#pragma once

// Parameter checkpoint format.
//
//   {
//     "format": "mpnn-params",
//     "version": 1,
//     "tensors": {
//       "<name>": {"shape": [d0, d1, ...], "values": [v0, v1, ...]},
//       ...
//     }
//   }
//
// Values are row-major float64, written as the shortest decimal that parses
// back to the identical double, so save -> load is bit-exact. Names sort
// lexicographically.

#include <filesystem>
#include <string>

#include "json.hpp"
#include "mpnn/nn.hpp"

namespace mpnn {

nlohmann::json params_to_json(const ParamStore& params);
/// Throws ContractError on malformed input (missing keys, shape/value
/// count mismatch, non-numeric values).
ParamStore params_from_json(const nlohmann::json& doc);

void save_params(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_params(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace mpnn
