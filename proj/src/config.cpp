#include "nvsnn/config.hpp"

#include <sstream>

namespace nvsnn {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(Errc::config, "boolean expected for " + key + ", got '" + v + "'");
}

double parse_real(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        require(used == v.size(), Errc::config, "trailing junk in " + key);
        return d;
    } catch (const Error&) {
        throw;
    } catch (...) {
        fail(Errc::config, "number expected for " + key + ", got '" + v + "'");
    }
}

std::uint64_t parse_uint(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const unsigned long long u = std::stoull(v, &used);
        require(used == v.size(), Errc::config, "trailing junk in " + key);
        return u;
    } catch (const Error&) {
        throw;
    } catch (...) {
        fail(Errc::config, "integer expected for " + key + ", got '" + v + "'");
    }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            require(line.back() == ']', Errc::config,
                    "bad section header at line " + std::to_string(lineno));
            section = line.substr(1, line.size() - 2);
            require(section == "data" || section == "model" || section == "cell" || section == "train",
                    Errc::config, "unknown config section [" + section + "]");
            continue;
        }
        const std::size_t eq = line.find('=');
        require(eq != std::string::npos, Errc::config,
                "expected key = value at line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        const std::string qual = section + "." + key;

        if (section == "data") {
            if (key == "train_dir") cfg.train_dir = val;
            else if (key == "test_dir") cfg.test_dir = val;
            else if (key == "dt_us") cfg.network.dt_us = static_cast<std::uint32_t>(parse_uint(val, qual));
            else if (key == "T") cfg.network.T = static_cast<std::uint32_t>(parse_uint(val, qual));
            else if (key == "channels") cfg.network.input.channels = parse_uint(val, qual);
            else if (key == "height") cfg.network.input.height = parse_uint(val, qual);
            else if (key == "width") cfg.network.input.width = parse_uint(val, qual);
            else fail(Errc::config, "unknown key " + qual);
        } else if (section == "model") {
            if (key == "kind") {
                cfg.network.model_kind = net::model_kind_from_string(val);
                cfg.network.readout = cfg.network.model_kind == net::ModelKind::snn
                                          ? net::ReadoutKind::spike_rate
                                          : net::ReadoutKind::linear_readout;
            } else if (key == "structure") {
                cfg.network.structure = val;
            } else if (key == "loss") {
                cfg.network.loss_kind = net::loss_kind_from_string(val);
            } else {
                fail(Errc::config, "unknown key " + qual);
            }
        } else if (section == "cell") {
            if (key == "u_th") cfg.network.cell.u_th = parse_real(val, qual);
            else if (key == "leak") cfg.network.cell.leak = parse_real(val, qual);
            else if (key == "grad_width") cfg.network.cell.grad_width = parse_real(val, qual);
            else if (key == "leakage_enabled") cfg.network.cell.leakage_enabled = parse_bool(val, qual);
            else if (key == "reset_enabled") cfg.network.cell.reset_enabled = parse_bool(val, qual);
            else if (key == "cross_recurrence") cfg.network.cell.cross_recurrence = parse_bool(val, qual);
            else if (key == "adaptive_leakage") cfg.network.cell.adaptive_leakage = parse_bool(val, qual);
            else fail(Errc::config, "unknown key " + qual);
        } else if (section == "train") {
            if (key == "max_epoch") cfg.train.max_epoch = parse_uint(val, qual);
            else if (key == "batch_size") cfg.train.batch_size = parse_uint(val, qual);
            else if (key == "lr") cfg.train.lr = parse_real(val, qual);
            else if (key == "beta1") cfg.train.beta1 = parse_real(val, qual);
            else if (key == "beta2") cfg.train.beta2 = parse_real(val, qual);
            else if (key == "eps") cfg.train.eps = parse_real(val, qual);
            else if (key == "seed") cfg.train.seed = parse_uint(val, qual);
            else if (key == "out_dir") cfg.out_dir = val;
            else fail(Errc::config, "unknown key " + qual);
        } else {
            fail(Errc::config, "key outside any section at line " + std::to_string(lineno));
        }
    }
    require(!cfg.network.structure.empty(), Errc::config, "model.structure is required");
    cfg.network.parse_structure();
    cfg.network.seed = cfg.train.seed;
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    const auto bytes = read_file(path);
    return parse_config_text(std::string(bytes.begin(), bytes.end()));
}

std::string encode_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "[data]\n";
    out << "train_dir = " << cfg.train_dir << "\n";
    out << "test_dir = " << cfg.test_dir << "\n";
    out << "dt_us = " << cfg.network.dt_us << "\n";
    out << "T = " << cfg.network.T << "\n";
    out << "channels = " << cfg.network.input.channels << "\n";
    out << "height = " << cfg.network.input.height << "\n";
    out << "width = " << cfg.network.input.width << "\n";
    out << "\n[model]\n";
    out << "kind = " << net::to_string(cfg.network.model_kind) << "\n";
    out << "structure = " << cfg.network.structure << "\n";
    out << "loss = " << net::to_string(cfg.network.loss_kind) << "\n";
    out << "\n[cell]\n";
    out << "u_th = " << cfg.network.cell.u_th << "\n";
    out << "leak = " << cfg.network.cell.leak << "\n";
    out << "grad_width = " << cfg.network.cell.grad_width << "\n";
    out << "leakage_enabled = " << (cfg.network.cell.leakage_enabled ? "true" : "false") << "\n";
    out << "reset_enabled = " << (cfg.network.cell.reset_enabled ? "true" : "false") << "\n";
    out << "cross_recurrence = " << (cfg.network.cell.cross_recurrence ? "true" : "false") << "\n";
    out << "adaptive_leakage = " << (cfg.network.cell.adaptive_leakage ? "true" : "false") << "\n";
    out << "\n[train]\n";
    out << "max_epoch = " << cfg.train.max_epoch << "\n";
    out << "batch_size = " << cfg.train.batch_size << "\n";
    out << "lr = " << cfg.train.lr << "\n";
    out << "beta1 = " << cfg.train.beta1 << "\n";
    out << "beta2 = " << cfg.train.beta2 << "\n";
    out << "eps = " << cfg.train.eps << "\n";
    out << "seed = " << cfg.train.seed << "\n";
    out << "out_dir = " << cfg.out_dir << "\n";
    return out.str();
}

}  // namespace nvsnn
