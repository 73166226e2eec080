#pragma once

#include <string>

#include "nvsnn/network.hpp"

namespace nvsnn::analysis {

// ---- temporal-contrast cross-entropy matrices --------------------------------

struct ContrastMatrix {
    std::size_t size = 0;  // (T - k) x (T - k)
    std::size_t k = 0;
    std::vector<double> values;  // row-major
    double mean = 0.0;
    double variance = 0.0;

    double at(std::size_t tx, std::size_t ty) const { return values[tx * size + ty]; }
    std::string to_csv() const;
};

// Cross-entropy between the slice windows [tx, tx+k] and [ty, ty+k] with the
// clamped log (epsilon = 1e-16); mean/variance over all matrix entries.
ContrastMatrix contrast_matrix(const io::SliceSequence& seq, std::size_t k);

inline constexpr double kContrastEpsilon = 1e-16;

// ---- parameter counting --------------------------------------------------------

struct ParamCountRow {
    std::string name;
    std::size_t count;
};

struct ParamCount {
    std::vector<ParamCountRow> rows;
    std::size_t total = 0;
    std::string to_csv() const;
};

template <typename T>
ParamCount count_params(net::Network<T>& net) {
    ParamCount pc;
    for (const auto& p : net.parameters()) {
        pc.rows.push_back({p.name, p.value->numel()});
        pc.total += p.value->numel();
    }
    return pc;
}

// ---- operation counting ---------------------------------------------------------
// Matrix-product accounting over one sample (batch 1) and the full T steps:
// only gradient-receiving products count in the backward direction (weight
// gradients and elementwise work are out of scope on both routes). SNN
// forward drive is event-driven, so its cost is spikes * fanout additions
// and the normalized spike rate alpha makes the row self-describing.

enum class Direction { forward, backward };

struct OpCountRow {
    std::string layer;
    std::uint64_t adds = 0;
    std::uint64_t muls = 0;
    std::uint64_t macs = 0;
    double alpha = 0.0;  // measured spike rate of the driving activations (SNN forward)
};

struct OpCount {
    std::vector<OpCountRow> rows;
    std::uint64_t adds = 0, muls = 0, macs = 0;
    std::string to_csv() const;
};

// Spike totals measured from an actual taped forward pass of one sample.
struct SpikeStats {
    std::uint32_t T = 0;
    // per cell layer (in stack order): total input spikes over all steps, and
    // total own-output spikes over steps 1..T-1 (what cross-recurrence reads)
    std::vector<std::uint64_t> input_spikes;
    std::vector<std::uint64_t> state_spikes;
};

template <typename T>
SpikeStats measure_spike_stats(net::Network<T>& net, const io::SliceSequence& sample) {
    std::vector<const io::SliceSequence*> batch{&sample};
    net.forward(batch, /*train=*/true);
    SpikeStats st;
    st.T = static_cast<std::uint32_t>(sample.T());
    for (auto& l : net.layers) {
        if (auto* lif = dynamic_cast<net::FcLifLayer<T>*>(l.get())) {
            std::uint64_t in_spikes = 0, state_spikes = 0;
            for (std::size_t t = 0; t < lif->tape.size(); ++t) {
                for (const T& v : lif->tape[t].in.data)
                    if (v != T{}) ++in_spikes;
                if (t + 1 < lif->tape.size())
                    for (const T& v : lif->tape[t].o.data)
                        if (v != T{}) ++state_spikes;
            }
            st.input_spikes.push_back(in_spikes);
            st.state_spikes.push_back(state_spikes);
        } else if (dynamic_cast<net::FcRnnLayer<T>*>(l.get()) ||
                   dynamic_cast<net::FcLstmLayer<T>*>(l.get())) {
            st.input_spikes.push_back(0);
            st.state_spikes.push_back(0);
        }
    }
    return st;
}

std::string to_string(Direction d);

// The T-step per-layer formulas; spike stats are required for SNN forward
// rows (pass the stats measured on the same sample the instrumented counter
// will replay).
//
// Per fully-connected layer of M inputs feeding d units over T steps:
//   SNN   fwd: alpha*M*d*T adds (= measured spikes * d)    bwd: T*d*M macs
//   RNN   fwd: T*M*d + (T-1)*d^2 macs                      bwd: same macs
//   LSTM  fwd: 4*(T*M*d + (T-1)*d^2) macs
//         bwd: 4*(T*M*d + (T-1)*d^2) muls + (T*M*d + (T-1)*d^2) macs
//              (gate-Jacobian materialization + two applications; collapses
//               to the 8MN-muls form when layer widths are equal)
// Temporal terms run T-1 times (zero-state boundary steps are skipped), the
// bottom parametered layer propagates nothing below, and conv cells are an
// extension counted as dense 9*Ci*Co*H*W-per-step products.
template <typename T>
OpCount estimate_ops(net::Network<T>& net, Direction dir, const SpikeStats* spikes = nullptr) {
    OpCount oc;
    std::size_t lowest_param = net.layers.size();
    for (std::size_t li = 0; li < net.layers.size(); ++li)
        if (!net.layers[li]->parameters().empty()) {
            lowest_param = li;
            break;
        }

    const std::uint64_t T_steps = net.config.T;
    std::size_t fc_idx = 0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        auto* layer = net.layers[li].get();
        const auto& in_shape = net.shape_trace[li];
        const auto& out_shape = net.shape_trace[li + 1];
        std::uint64_t m_in = 1, d_out = 1;
        for (auto v : in_shape) m_in *= v;
        for (auto v : out_shape) d_out *= v;
        const bool below = li > lowest_param;

        OpCountRow row;
        row.layer = layer->describe();

        if (auto* lif = dynamic_cast<net::FcLifLayer<T>*>(layer)) {
            const std::uint64_t width = out_shape[0];
            if (dir == Direction::forward) {
                if (lif->input_binary()) {
                    require(spikes != nullptr, Errc::config,
                            "estimate_ops: SNN forward needs measured spike stats");
                    row.adds = spikes->input_spikes[fc_idx] * width;
                    row.alpha = static_cast<double>(spikes->input_spikes[fc_idx]) /
                                (static_cast<double>(m_in) * static_cast<double>(T_steps));
                    if (lif->params.W_rec) row.adds += spikes->state_spikes[fc_idx] * width;
                } else {
                    row.macs = T_steps * m_in * width;
                }
            } else {
                if (below) row.macs += T_steps * width * m_in;
                if (lif->params.W_rec) row.macs += (T_steps - 1) * width * width;
            }
            ++fc_idx;
        } else if (dynamic_cast<net::FcRnnLayer<T>*>(layer)) {
            const std::uint64_t width = out_shape[0];
            if (dir == Direction::forward)
                row.macs = T_steps * m_in * width + (T_steps - 1) * width * width;
            else
                row.macs = (below ? T_steps * width * m_in : 0) + (T_steps - 1) * width * width;
            ++fc_idx;
        } else if (dynamic_cast<net::FcLstmLayer<T>*>(layer)) {
            const std::uint64_t width = out_shape[0];
            const std::uint64_t spatial = T_steps * m_in * width;
            const std::uint64_t temporal = (T_steps - 1) * width * width;
            if (dir == Direction::forward) {
                row.macs = 4 * (spatial + temporal);
            } else {
                row.muls = 4 * ((below ? spatial : 0) + temporal);
                row.macs = (below ? spatial : 0) + temporal;
            }
            ++fc_idx;
        } else if (dynamic_cast<net::ReadoutLayer<T>*>(layer)) {
            row.macs = T_steps * m_in * d_out;  // same product either direction
        } else if (dynamic_cast<net::ConvLifLayer<T>*>(layer)) {
            const std::uint64_t conv = 9ULL * in_shape[0] * out_shape[0] * out_shape[1] * out_shape[2];
            row.macs = (dir == Direction::forward || below) ? T_steps * conv : 0;
            row.layer += " [conv extension]";
        } else if (dynamic_cast<net::ConvRnnLayer<T>*>(layer)) {
            const std::uint64_t conv = 9ULL * in_shape[0] * out_shape[0] * out_shape[1] * out_shape[2];
            const std::uint64_t rec = 9ULL * out_shape[0] * out_shape[0] * out_shape[1] * out_shape[2];
            row.macs = (dir == Direction::forward || below ? T_steps * conv : 0) + (T_steps - 1) * rec;
            row.layer += " [conv extension]";
        } else if (dynamic_cast<net::ConvLstmLayer<T>*>(layer)) {
            const std::uint64_t conv = 9ULL * in_shape[0] * out_shape[0] * out_shape[1] * out_shape[2];
            const std::uint64_t rec = 9ULL * out_shape[0] * out_shape[0] * out_shape[1] * out_shape[2];
            row.macs =
                4 * ((dir == Direction::forward || below ? T_steps * conv : 0) + (T_steps - 1) * rec);
            row.layer += " [conv extension]";
        } else {
            // pooling: no matrix products
        }
        oc.rows.push_back(row);
        oc.adds += row.adds;
        oc.muls += row.muls;
        oc.macs += row.macs;
    }
    return oc;
}

// ---- weight histograms -----------------------------------------------------------

enum class WeightClass { recurrent, feedforward };

struct Histogram {
    double lo = 0.0, hi = 0.0;
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;
    std::string to_csv() const;
};

Histogram histogram_of(const std::vector<double>& values, std::size_t bins);

// For SNNs the recurrent weight of every neuron is the constant -leak
// (-e^{-dt/tau}); for RNN/LSTM it is the empirical distribution of the
// recurrent matrices. Feedforward selects the input-side weights.
template <typename T>
Histogram weight_histogram(net::Network<T>& net, WeightClass which, std::size_t bins) {
    std::vector<double> values;
    for (auto& l : net.layers) {
        if (auto* lif = dynamic_cast<net::FcLifLayer<T>*>(l.get())) {
            if (which == WeightClass::recurrent) {
                const double w = -static_cast<double>(lif->params.effective_leak());
                for (std::size_t i = 0; i < lif->params.W.rows(); ++i) values.push_back(w);
            } else {
                for (const T& v : lif->params.W.data) values.push_back(static_cast<double>(v));
            }
        } else if (auto* clif = dynamic_cast<net::ConvLifLayer<T>*>(l.get())) {
            if (which == WeightClass::recurrent) {
                const double w = -static_cast<double>(clif->leak());
                for (std::size_t i = 0; i < clif->K.dim(0); ++i) values.push_back(w);
            } else {
                for (const T& v : clif->K.data) values.push_back(static_cast<double>(v));
            }
        } else {
            for (auto& p : l->parameters()) {
                if (p.value->ndim() < 2) continue;  // biases are not weights
                const bool recurrent = p.name.back() == '2';
                if ((which == WeightClass::recurrent) == recurrent)
                    for (const T& v : p.value->data) values.push_back(static_cast<double>(v));
            }
        }
    }
    require(!values.empty(), Errc::config, "no weights in the requested class");
    return histogram_of(values, bins);
}

// ---- feature-map export -------------------------------------------------------------

// Runs one taped forward pass and writes the chosen conv layer's activation
// map at every timestep as NVSF tensors plus a CSV manifest. layer_index
// counts layers in stack order; a non-conv layer is a typed error. Returns
// the manifest path.
template <typename T>
std::string export_feature_maps(net::Network<T>& net, const io::SliceSequence& sample,
                                std::size_t layer_index, const std::string& out_dir) {
    require(layer_index < net.layers.size(), Errc::config, "feature maps: layer index out of range");
    auto* layer = net.layers[layer_index].get();
    std::vector<Tensor<T>> maps;
    std::vector<const io::SliceSequence*> batch{&sample};
    if (auto* clif = dynamic_cast<net::ConvLifLayer<T>*>(layer)) {
        net.forward(batch, /*train=*/true);
        maps = clif->tape_o;
    } else if (auto* crnn = dynamic_cast<net::ConvRnnLayer<T>*>(layer)) {
        net.forward(batch, /*train=*/true);
        maps = crnn->tape_h;
    } else if (auto* clstm = dynamic_cast<net::ConvLstmLayer<T>*>(layer)) {
        net.forward(batch, /*train=*/true);
        for (std::size_t t = 0; t < clstm->tape_tanh_c.size(); ++t) {  // h = tanh(c) o o-gate
            Tensor<T> h(clstm->tape_tanh_c[t].shape);
            for (std::size_t i = 0; i < h.numel(); ++i)
                h.data[i] = clstm->tape_tanh_c[t].data[i] *
                            clstm->tape_gate[t][cells::kOutput].data[i];
            maps.push_back(std::move(h));
        }
    } else {
        fail(Errc::config, "feature maps: layer " + std::to_string(layer_index) + " (" +
                               layer->describe() + ") is not a conv cell");
    }

    std::string manifest = "timestep,file,channels,height,width,mean\n";
    const std::string manifest_path = out_dir + "/featmaps_manifest.csv";
    for (std::size_t t = 0; t < maps.size(); ++t) {
        const Tensor<T>& m = maps[t];  // [1, C, H, W]
        Tensor<float> f({1, m.dim(1), m.dim(2), m.dim(3)});
        double sum = 0.0;
        for (std::size_t i = 0; i < m.numel(); ++i) {
            f.data[i] = static_cast<float>(m.data[i]);
            sum += static_cast<double>(m.data[i]);
        }
        char name[64];
        std::snprintf(name, sizeof name, "featmap_t%03zu.nvsf", t);
        write_file(out_dir + "/" + name, io::save_float_slices(f, sample.dt_us, sample.label));
        char row[160];
        std::snprintf(row, sizeof row, "%zu,%s,%zu,%zu,%zu,%.6f\n", t, name, m.dim(1), m.dim(2),
                      m.dim(3), sum / static_cast<double>(m.numel()));
        manifest += row;
    }
    write_text_file(manifest_path, manifest);
    return manifest_path;
}

}  // namespace nvsnn::analysis
