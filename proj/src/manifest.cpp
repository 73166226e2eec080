#include "nvsnn/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <sstream>

namespace nvsnn {

std::string current_timestamp() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void RunManifest::write(const std::string& path) const {
    std::ostringstream out;
    out << "code_version = " << code_version << "\n";
    out << "started_at = " << started_at << "\n";
    out << "seed = " << seed << "\n";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(train_checksum));
    out << "train_checksum = " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(test_checksum));
    out << "test_checksum = " << buf << "\n";
    out << "train_samples = " << train_samples << "\n";
    out << "test_samples = " << test_samples << "\n";
    out << "\n# --- config echo ---\n" << config_text;
    write_text_file(path, out.str());
}

}  // namespace nvsnn
