#include "nvsnn/network.hpp"

#include <cctype>

namespace nvsnn::net {

std::string to_string(ModelKind m) {
    switch (m) {
        case ModelKind::snn: return "snn";
        case ModelKind::rnn: return "rnn";
        case ModelKind::lstm: return "lstm";
    }
    return "?";
}

std::string to_string(LossKind l) {
    switch (l) {
        case LossKind::snn_rate_mse: return "snn_rate_mse";
        case LossKind::last_step: return "last_step";
        case LossKind::per_step: return "per_step";
        case LossKind::rate_inspired: return "rate_inspired";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "snn") return ModelKind::snn;
    if (s == "rnn") return ModelKind::rnn;
    if (s == "lstm") return ModelKind::lstm;
    fail(Errc::config, "unknown model kind: " + s);
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "snn_rate_mse") return LossKind::snn_rate_mse;
    if (s == "last_step") return LossKind::last_step;
    if (s == "per_step") return LossKind::per_step;
    if (s == "rate_inspired") return LossKind::rate_inspired;
    fail(Errc::config, "unknown loss kind: " + s);
}

namespace {

bool all_digits(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
}

std::vector<std::string> split_dash(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == '-') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

// Layer-chain notation: "Input-MP4-64C3-128C3-AP2-128C3-AP2-256FC-11"
// MPk / APk: max / average pooling, nC3: 3x3 conv cell with n maps,
// nFC: fully-connected cell with n units, trailing integer: class count.
void NetworkConfig::parse_structure() {
    stack.clear();
    const auto tokens = split_dash(structure);
    require(tokens.size() >= 2, Errc::config, "layer chain too short: " + structure);
    require(tokens.front() == "Input", Errc::config, "layer chain must start with Input");
    require(all_digits(tokens.back()), Errc::config, "layer chain must end with a class count");
    n_classes = static_cast<std::size_t>(std::stoul(tokens.back()));
    require(n_classes >= 1, Errc::config, "class count must be positive");
    for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
        const std::string& tok = tokens[i];
        LayerSpec spec{};
        if (tok.rfind("MP", 0) == 0 && all_digits(tok.substr(2))) {
            spec.kind = LayerSpec::Kind::max_pool;
            spec.arg = std::stoul(tok.substr(2));
        } else if (tok.rfind("AP", 0) == 0 && all_digits(tok.substr(2))) {
            spec.kind = LayerSpec::Kind::avg_pool;
            spec.arg = std::stoul(tok.substr(2));
        } else if (tok.size() > 2 && tok.substr(tok.size() - 2) == "C3" &&
                   all_digits(tok.substr(0, tok.size() - 2))) {
            spec.kind = LayerSpec::Kind::conv_cell;
            spec.arg = std::stoul(tok.substr(0, tok.size() - 2));
        } else if (tok.size() > 2 && tok.substr(tok.size() - 2) == "FC" &&
                   all_digits(tok.substr(0, tok.size() - 2))) {
            spec.kind = LayerSpec::Kind::fc_cell;
            spec.arg = std::stoul(tok.substr(0, tok.size() - 2));
        } else {
            fail(Errc::config, "malformed layer token: " + tok);
        }
        require(spec.arg >= 1, Errc::config, "layer token argument must be positive: " + tok);
        stack.push_back(spec);
    }
}

void NetworkConfig::validate() const {
    require(T >= 1, Errc::config, "T must be >= 1");
    require(dt_us >= 1, Errc::config, "dt_us must be >= 1");
    require(input.height >= 1 && input.width >= 1 && input.channels >= 1, Errc::config,
            "input geometry unset");
    require(n_classes >= 1, Errc::config, "class count unset");
    require(cell.leak >= 0.0 && cell.leak < 1.0, Errc::config, "leak must lie in [0,1)");
    require(cell.grad_width > 0.0, Errc::config, "gradient width must be positive");
    if (model_kind == ModelKind::snn) {
        require(readout == ReadoutKind::spike_rate, Errc::config, "snn requires spike_rate readout");
        require(loss_kind == LossKind::snn_rate_mse, Errc::config,
                "snn requires the snn_rate_mse loss");
    } else {
        require(readout == ReadoutKind::linear_readout, Errc::config,
                "rnn/lstm require a linear readout");
        require(loss_kind != LossKind::snn_rate_mse, Errc::config,
                "snn_rate_mse is only valid for snn models");
        require(!cell.cross_recurrence && !cell.adaptive_leakage, Errc::config,
                "cross_recurrence/adaptive_leakage are snn variants");
    }
    if (cell.cross_recurrence)
        for (const auto& s : stack)
            require(s.kind != LayerSpec::Kind::conv_cell, Errc::config,
                    "cross_recurrence supports fully-connected stacks only");
}

}  // namespace nvsnn::net
