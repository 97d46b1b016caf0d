#pragma once

#include "haicu/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace haicu {

/// Checkpoints are single safetensors files. The header's __metadata__
/// carries the model configuration ("config") and training-run metadata
/// ("run") as JSON strings; tensors are the named network parameters.
void save_checkpoint(const std::filesystem::path& path, HaicuNet& model,
                     const nlohmann::json& run = nlohmann::json::object());

struct LoadedCheckpoint {
    HaicuNet model{nullptr};
    nlohmann::json run;
    std::string id;  // content hash of the file
};

/// Throws NotFound("checkpoint not found: ...") for a missing file and
/// ParseError for a malformed one.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// 64-bit FNV-1a of `bytes` as 16 hex digits.
std::string fingerprint(std::string_view bytes);

}  // namespace haicu
