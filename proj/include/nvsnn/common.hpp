#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace nvsnn {

// Typed error kinds so callers (and the CLI exit-code mapping) can tell
// data problems apart from usage problems.
enum class Errc {
    malformed_file,
    geometry,
    label_file,
    unsupported_format,
    bad_magic,
    bad_version,
    truncated,
    corrupt_payload,
    shape_mismatch,
    config,
    missing_tape,
    missing_file,
    check_failed,
    usage,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Errc code, const std::string& msg) {
    if (!cond) fail(code, msg);
}

// Deterministic, portable PRNG (splitmix64). std::mt19937 would do on one
// toolchain, but the distributions are not pinned by the standard and every
// random draw in a run must replay from the root seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    // derive an independent child stream (root seed -> named substreams)
    Rng split(std::uint64_t salt) {
        return Rng(next_u64() ^ (salt * 0x9e3779b97f4a7c15ULL + 0x165667b19e3779f9ULL));
    }

private:
    std::uint64_t state_;
};

// ---- little-endian byte serialization -------------------------------------

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffULL));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

// Bounds-checked cursor over a byte buffer; all under-runs surface as a
// typed truncation error rather than UB.
class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::vector<std::uint8_t>& buf) : data_(buf.data()), size_(buf.size()) {}

    std::size_t remaining() const { return size_ - pos_; }
    std::size_t pos() const { return pos_; }

    std::uint8_t u8() {
        require(remaining() >= 1, Errc::truncated, "unexpected end of input");
        return data_[pos_++];
    }

    std::uint32_t u32le() {
        require(remaining() >= 4, Errc::truncated, "unexpected end of input");
        std::uint32_t v = static_cast<std::uint32_t>(data_[pos_]) |
                          (static_cast<std::uint32_t>(data_[pos_ + 1]) << 8) |
                          (static_cast<std::uint32_t>(data_[pos_ + 2]) << 16) |
                          (static_cast<std::uint32_t>(data_[pos_ + 3]) << 24);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64le() {
        std::uint64_t lo = u32le();
        std::uint64_t hi = u32le();
        return lo | (hi << 32);
    }

    std::int32_t i32le() { return static_cast<std::int32_t>(u32le()); }

    void bytes(void* dst, std::size_t n) {
        require(remaining() >= n, Errc::truncated, "unexpected end of input");
        std::memcpy(dst, data_ + pos_, n);
        pos_ += n;
    }

    void skip(std::size_t n) {
        require(remaining() >= n, Errc::truncated, "unexpected end of input");
        pos_ += n;
    }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
void write_text_file(const std::string& path, const std::string& text);

// FNV-1a, used for dataset checksums in run manifests.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline constexpr const char* kVersionString = "nvsnn 0.1.0";

}  // namespace nvsnn
