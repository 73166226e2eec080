#pragma once

#include "nvsnn/network.hpp"

// NVCK checkpoint container: config echo plus named parameter tensors.
//   magic "NVCK" | u32 version=1 | u32 cfg_len | cfg text |
//   u32 n_tensors | per tensor: u32 name_len | name | u32 ndim | u32 dims[] |
//   u32 elem_size (4=f32, 8=f64) | u64 payload_bytes | payload (little-endian)

namespace nvsnn::net {

template <typename T>
void save_checkpoint(Network<T>& net, const std::string& config_text, const std::string& path) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'N', 'V', 'C', 'K'});
    put_u32(out, 1u);
    put_u32(out, static_cast<std::uint32_t>(config_text.size()));
    out.insert(out.end(), config_text.begin(), config_text.end());
    const auto params = net.parameters();
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.insert(out.end(), p.name.begin(), p.name.end());
        put_u32(out, static_cast<std::uint32_t>(p.value->ndim()));
        for (std::size_t d : p.value->shape) put_u32(out, static_cast<std::uint32_t>(d));
        put_u32(out, static_cast<std::uint32_t>(sizeof(T)));
        put_u64(out, static_cast<std::uint64_t>(p.value->numel() * sizeof(T)));
        const auto* raw = reinterpret_cast<const std::uint8_t*>(p.value->ptr());
        out.insert(out.end(), raw, raw + p.value->numel() * sizeof(T));
    }
    write_file(path, out);
}

inline ByteReader open_checkpoint(const std::vector<std::uint8_t>& bytes, std::string& config_text) {
    ByteReader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    require(std::memcmp(magic, "NVCK", 4) == 0, Errc::bad_magic, "not an NVCK checkpoint");
    const std::uint32_t version = r.u32le();
    require(version == 1, Errc::bad_version, "unsupported checkpoint version");
    const std::uint32_t cfg_len = r.u32le();
    config_text.resize(cfg_len);
    r.bytes(config_text.data(), cfg_len);
    return r;
}

inline std::string read_checkpoint_config(const std::string& path) {
    const auto bytes = read_file(path);
    std::string text;
    open_checkpoint(bytes, text);
    return text;
}

template <typename T>
void load_checkpoint_params(Network<T>& net, const std::string& path) {
    const auto bytes = read_file(path);
    std::string text;
    ByteReader r = open_checkpoint(bytes, text);
    const std::uint32_t n = r.u32le();
    auto params = net.parameters();
    require(params.size() == n, Errc::shape_mismatch, "checkpoint tensor count mismatch");
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name(r.u32le(), '\0');
        r.bytes(name.data(), name.size());
        require(name == params[i].name, Errc::shape_mismatch,
                "checkpoint tensor order mismatch at " + name);
        const std::uint32_t ndim = r.u32le();
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = r.u32le();
        require(shape == params[i].value->shape, Errc::shape_mismatch,
                "checkpoint tensor shape mismatch at " + name);
        const std::uint32_t elem = r.u32le();
        const std::uint64_t nbytes = r.u64le();
        require(elem == 4 || elem == 8, Errc::corrupt_payload, "unknown element size");
        require(nbytes == params[i].value->numel() * static_cast<std::uint64_t>(elem),
                Errc::truncated, "checkpoint payload size mismatch at " + name);
        if (elem == sizeof(T)) {
            r.bytes(params[i].value->ptr(), static_cast<std::size_t>(nbytes));
        } else if (elem == 4) {
            std::vector<float> tmp(params[i].value->numel());
            r.bytes(tmp.data(), tmp.size() * 4);
            for (std::size_t j = 0; j < tmp.size(); ++j)
                params[i].value->data[j] = static_cast<T>(tmp[j]);
        } else {
            std::vector<double> tmp(params[i].value->numel());
            r.bytes(tmp.data(), tmp.size() * 8);
            for (std::size_t j = 0; j < tmp.size(); ++j)
                params[i].value->data[j] = static_cast<T>(tmp[j]);
        }
    }
}

}  // namespace nvsnn::net
