#pragma once

#include <string>
#include <vector>

#include "nvsnn/event_io.hpp"

namespace nvsnn::data {

// Collapsed samples ready for the network.
struct SliceDataset {
    std::vector<io::SliceSequence> samples;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

// Raw parsed recordings; collapsible at any temporal resolution.
struct EventDataset {
    std::vector<io::EventStream> streams;

    std::size_t size() const { return streams.size(); }
};

SliceDataset collapse_all(const EventDataset& events, std::uint32_t dt_us, std::uint32_t T);

// Directory loaders.
//  - NVSL cache dir: every *.nvsl file is one sample.
//  - N-MNIST raw dir: <dir>/<digit 0..9>/*.bin, 5-byte event records.
//  - gesture raw dir: <dir>/*.aedat with a matching *_labels.csv per recording.
SliceDataset load_nvsl_dir(const std::string& dir);
EventDataset load_nmnist_dir(const std::string& dir);
EventDataset load_gesture_dir(const std::string& dir);

// FNV-1a over sorted (name, payload) pairs of the dataset files; recorded in
// run manifests so an eval can prove it saw the same data.
std::uint64_t dataset_checksum(const std::string& dir);

std::vector<std::string> list_files(const std::string& dir, const std::string& ext);

}  // namespace nvsnn::data
