#pragma once

#include <string>

#include "nvsnn/common.hpp"

namespace nvsnn {

// Reproducibility sidecar written before a run starts: full config echo, the
// root seed, dataset checksums, and the code version.
struct RunManifest {
    std::string config_text;
    std::uint64_t seed = 0;
    std::uint64_t train_checksum = 0;
    std::uint64_t test_checksum = 0;
    std::size_t train_samples = 0;
    std::size_t test_samples = 0;
    std::string code_version = kVersionString;
    std::string started_at;

    void write(const std::string& path) const;
};

std::string current_timestamp();

}  // namespace nvsnn
