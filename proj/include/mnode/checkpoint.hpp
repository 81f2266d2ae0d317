#pragma once

#include "mnode/tensor.hpp"

#include <filesystem>
#include "json.hpp"

namespace mnode {

// Checkpoint document:
//   {"format": "mnode-checkpoint", "version": 1, "adam_step": <int>,
//    "params": [{"name": str, "shape": [rows, cols], "data": [row-major doubles]}, ...]}
// Doubles are written with 17 significant digits so load(save(p)) == p bit for bit.

nlohmann::json params_to_json(const ParamStore& params);
ParamStore params_from_json(const nlohmann::json& doc);

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace mnode
