#include "nvsnn/dataset.hpp"

#include <algorithm>
#include <filesystem>

namespace fs = std::filesystem;

namespace nvsnn::data {

SliceDataset collapse_all(const EventDataset& events, std::uint32_t dt_us, std::uint32_t T) {
    SliceDataset out;
    out.samples.reserve(events.streams.size());
    for (const auto& s : events.streams) out.samples.push_back(io::collapse(s, dt_us, T));
    return out;
}

std::vector<std::string> list_files(const std::string& dir, const std::string& ext) {
    require(fs::is_directory(dir), Errc::missing_file, "not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    return files;
}

SliceDataset load_nvsl_dir(const std::string& dir) {
    SliceDataset ds;
    for (const auto& f : list_files(dir, ".nvsl")) ds.samples.push_back(io::load_slices_file(f));
    require(!ds.samples.empty(), Errc::missing_file, "no .nvsl files under " + dir);
    return ds;
}

EventDataset load_nmnist_dir(const std::string& dir) {
    EventDataset ds;
    for (const auto& f : list_files(dir, ".bin")) {
        io::EventStream s = io::parse_nmnist(read_file(f));
        // class = name of the containing directory (the distribution layout)
        const std::string parent = fs::path(f).parent_path().filename().string();
        require(!parent.empty() && parent.size() <= 2 &&
                    std::all_of(parent.begin(), parent.end(),
                                [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }),
                Errc::label_file, "N-MNIST file not under a digit directory: " + f);
        s.label = std::stoi(parent);
        ds.streams.push_back(std::move(s));
    }
    require(!ds.streams.empty(), Errc::missing_file, "no .bin files under " + dir);
    return ds;
}

EventDataset load_gesture_dir(const std::string& dir) {
    EventDataset ds;
    for (const auto& f : list_files(dir, ".aedat")) {
        const std::string csv_path = f.substr(0, f.size() - 6) + "_labels.csv";
        require(fs::exists(csv_path), Errc::missing_file, "missing label file " + csv_path);
        const auto csv_bytes = read_file(csv_path);
        auto trials = io::parse_gesture(read_file(f), std::string(csv_bytes.begin(), csv_bytes.end()));
        for (auto& t : trials) ds.streams.push_back(std::move(t));
    }
    require(!ds.streams.empty(), Errc::missing_file, "no .aedat files under " + dir);
    return ds;
}

std::uint64_t dataset_checksum(const std::string& dir) {
    require(fs::is_directory(dir), Errc::missing_file, "not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& f : files) {
        const std::string rel = fs::relative(f, dir).string();
        h = fnv1a(rel.data(), rel.size(), h);
        const auto bytes = read_file(f);
        h = fnv1a(bytes.data(), bytes.size(), h);
    }
    return h;
}

}  // namespace nvsnn::data
