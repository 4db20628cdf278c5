#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "offbench/nn.hpp"

namespace offbench::nn {

nlohmann::json to_json(const NetSpec& spec);
NetSpec net_spec_from_json(const nlohmann::json& j);

struct LoadedCheckpoint {
    ParamSet params;
    nlohmann::json extra;
};

/// Writes one JSON header line ({"net_spec", "count", "aux", "extra"}) followed by
/// `count` little-endian IEEE-754 doubles.
void save_checkpoint(const std::filesystem::path& path, const ParamSet& params,
                     const nlohmann::json& extra = nlohmann::json::object());
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

} // namespace offbench::nn
