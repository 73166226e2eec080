#pragma once

#include <map>
#include <string>

#include "nvsnn/network.hpp"

namespace nvsnn {

// Optimization hyper-parameters (Adam with its default moment settings).
struct TrainConfig {
    std::size_t max_epoch = 100;
    std::size_t batch_size = 50;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 1;
};

// A full experiment: dataset paths + network + training settings, read from a
// sectioned key=value file ([data], [model], [cell], [train]). Unknown keys
// and sections are errors.
struct ExperimentConfig {
    std::string train_dir;
    std::string test_dir;
    std::string out_dir = "run";
    net::NetworkConfig network;
    TrainConfig train;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Canonical round-trippable text form; embedded in checkpoints and manifests.
std::string encode_config(const ExperimentConfig& cfg);

}  // namespace nvsnn
