#pragma once

#include <string>

#include "semgrasp/params.hpp"

namespace semgrasp {

/// Checkpoint container: magic "GSPK", format version, a free-form JSON
/// metadata string, then a tensor manifest followed by raw little-endian
/// payloads. Round-trips are bit-exact.
constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamStore& params, const std::string& meta_json);

struct LoadedCheckpoint {
    ParamStore params;
    std::string meta_json;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace semgrasp
