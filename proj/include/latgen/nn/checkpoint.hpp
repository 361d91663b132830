#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "latgen/nn/layers.hpp"

namespace latgen::nn {

inline constexpr const char* kCheckpointFormat = "latgen-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Parameters as {name: {"shape": [r, c], "data": [...]}}.
nlohmann::json parameters_to_json(const ParameterSet& params);
/// Copies values into an existing set; names and shapes must match exactly.
void parameters_from_json(const nlohmann::json& j, const ParameterSet& params);

/// Writes {"format", "version", "model", "parameters", "state"} as compact
/// JSON. Doubles are written in shortest round-trip form so load(save(m))
/// restores every value bit-for-bit.
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& model, const ParameterSet& params,
                     const nlohmann::json& state = nlohmann::json::object());

/// Reads and validates the envelope; returns the whole document.
nlohmann::json read_checkpoint(const std::filesystem::path& path);

}  // namespace latgen::nn
