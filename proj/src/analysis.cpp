#include "nvsnn/analysis.hpp"

#include <cmath>

namespace nvsnn::analysis {

std::string to_string(Direction d) { return d == Direction::forward ? "forward" : "backward"; }

// CE over two binary windows reduces to counting the four (a,b) combinations;
// the clamped log takes only two values, log(eps) and log(1-eps).
ContrastMatrix contrast_matrix(const io::SliceSequence& seq, std::size_t k) {
    const std::size_t T = seq.T();
    require(k + 1 <= T, Errc::config, "contrast_matrix: k >= T");
    const std::size_t windows = T - k;
    const std::size_t plane = seq.channels() * seq.height() * seq.width();
    const std::size_t N = (k + 1) * plane;  // elements per window

    const double log_eps = std::log(kContrastEpsilon);
    const double log_one = std::log(1.0 - kContrastEpsilon);

    ContrastMatrix m;
    m.size = windows;
    m.k = k;
    m.values.assign(windows * windows, 0.0);

    const std::uint8_t* base = seq.data.ptr();
#pragma omp parallel for collapse(2) schedule(static)
    for (std::ptrdiff_t tx = 0; tx < static_cast<std::ptrdiff_t>(windows); ++tx)
        for (std::ptrdiff_t ty = 0; ty < static_cast<std::ptrdiff_t>(windows); ++ty) {
            const std::uint8_t* wx = base + tx * plane;
            const std::uint8_t* wy = base + ty * plane;
            std::uint64_t mismatch = 0;
            for (std::size_t i = 0; i < N; ++i) mismatch += wx[i] ^ wy[i];
            const std::uint64_t match = N - mismatch;
            m.values[tx * windows + ty] =
                -(static_cast<double>(mismatch) * log_eps + static_cast<double>(match) * log_one) /
                static_cast<double>(N);
        }

    double sum = 0.0, sq = 0.0;
    for (double v : m.values) {
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(m.values.size());
    m.mean = sum / n;
    m.variance = sq / n - m.mean * m.mean;
    return m;
}

std::string ContrastMatrix::to_csv() const {
    std::string s;
    char buf[48];
    for (std::size_t tx = 0; tx < size; ++tx) {
        for (std::size_t ty = 0; ty < size; ++ty) {
            std::snprintf(buf, sizeof buf, "%.17g", at(tx, ty));
            s += buf;
            s += (ty + 1 == size) ? '\n' : ',';
        }
    }
    return s;
}

std::string ParamCount::to_csv() const {
    std::string s = "tensor,count\n";
    for (const auto& r : rows) s += r.name + "," + std::to_string(r.count) + "\n";
    s += "total," + std::to_string(total) + "\n";
    return s;
}

std::string OpCount::to_csv() const {
    std::string s = "layer,adds,muls,macs,alpha\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, ",%llu,%llu,%llu,%.6f\n",
                      static_cast<unsigned long long>(r.adds),
                      static_cast<unsigned long long>(r.muls),
                      static_cast<unsigned long long>(r.macs), r.alpha);
        s += r.layer + buf;
    }
    std::snprintf(buf, sizeof buf, "total,%llu,%llu,%llu,\n", static_cast<unsigned long long>(adds),
                  static_cast<unsigned long long>(muls), static_cast<unsigned long long>(macs));
    s += buf;
    return s;
}

Histogram histogram_of(const std::vector<double>& values, std::size_t bins) {
    require(bins >= 1, Errc::config, "histogram needs at least one bin");
    require(!values.empty(), Errc::config, "histogram of nothing");
    Histogram h;
    h.lo = h.hi = values.front();
    for (double v : values) {
        h.lo = std::min(h.lo, v);
        h.hi = std::max(h.hi, v);
    }
    if (h.hi == h.lo) h.hi = h.lo + 1e-12;  // degenerate (single-spike) histogram
    h.counts.assign(bins, 0);
    for (double v : values) {
        std::size_t b = static_cast<std::size_t>((v - h.lo) / (h.hi - h.lo) * static_cast<double>(bins));
        if (b >= bins) b = bins - 1;
        ++h.counts[b];
    }
    h.total = values.size();
    return h;
}

std::string Histogram::to_csv() const {
    std::string s = "bin_lo,bin_hi,count\n";
    char buf[96];
    const double w = (hi - lo) / static_cast<double>(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%llu\n", lo + w * static_cast<double>(i),
                      lo + w * static_cast<double>(i + 1),
                      static_cast<unsigned long long>(counts[i]));
        s += buf;
    }
    return s;
}

}  // namespace nvsnn::analysis
