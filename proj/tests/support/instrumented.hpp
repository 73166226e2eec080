#pragma once

#include "nvsnn/network.hpp"
#include "nvsnn/training.hpp"

// Instrumented replay of fully-connected networks: executes forward and
// backward with its own loops over the production network's parameters and
// counts every executed matrix-product operation by incrementing tallies at
// the point of execution. Independent of analysis::estimate_ops, which is
// pure formula.
//
// Counting scope follows the complexity-accounting convention: matrix
// products on the gradient-receiving paths; weight-gradient outer products,
// bias sums and elementwise vector work are out of scope. The LSTM backward
// is replayed in its gate-Jacobian materialization form (column-scaling MULs
// plus one application MAC pass per direction); the cell-path correction
// products that thread the exact deltas are executed alongside but sit
// outside the convention's scope.

namespace nvsnn::testing {

struct OpTally {
    std::uint64_t adds = 0, muls = 0, macs = 0;

    bool operator==(const OpTally&) const = default;
};

struct InstrumentedRun {
    OpTally forward, backward;
    std::vector<Tensor<double>> outputs;  // per t, [classes]
    double output_max_diff = 0.0;         // vs the production forward
};

namespace detail {

inline Tensor<double> slice_vector(const io::SliceSequence& s, std::size_t t) {
    const std::size_t plane = s.channels() * s.height() * s.width();
    Tensor<double> x({plane});
    const std::uint8_t* src = s.data.ptr() + t * plane;
    for (std::size_t i = 0; i < plane; ++i) x.data[i] = static_cast<double>(src[i]);
    return x;
}

// y (+)= W x, dense: rows*cols MACs
inline void matvec(const Tensor<double>& W, const Tensor<double>& x, Tensor<double>& y, bool acc,
                   OpTally& tally) {
    if (!acc) y = Tensor<double>({W.rows()});
    for (std::size_t j = 0; j < W.rows(); ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < W.cols(); ++k) s += W.at(j, k) * x.data[k];
        y.data[j] += s;
    }
    tally.macs += W.rows() * W.cols();
}

// y (+)= W x for binary x: adds = nnz * rows (event-driven)
inline void matvec_binary(const Tensor<double>& W, const Tensor<double>& x, Tensor<double>& y,
                          bool acc, OpTally& tally) {
    if (!acc) y = Tensor<double>({W.rows()});
    std::uint64_t nnz = 0;
    for (std::size_t k = 0; k < W.cols(); ++k)
        if (x.data[k] != 0.0) ++nnz;
    for (std::size_t j = 0; j < W.rows(); ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < W.cols(); ++k)
            if (x.data[k] != 0.0) s += W.at(j, k);
        y.data[j] += s;
    }
    tally.adds += nnz * W.rows();
}

// y (+)= W^T d: cols*rows MACs
inline void matvec_t(const Tensor<double>& W, const Tensor<double>& d, Tensor<double>& y, bool acc,
                     OpTally& tally) {
    if (!acc) y = Tensor<double>({W.cols()});
    for (std::size_t k = 0; k < W.cols(); ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < W.rows(); ++j) s += W.at(j, k) * d.data[j];
        y.data[k] += s;
    }
    tally.macs += W.rows() * W.cols();
}

}  // namespace detail

// Runs one sample (batch 1) through an FC-only network (optionally with a
// leading pool layer is NOT supported; acceptance uses pure FC stacks).
inline InstrumentedRun instrumented_run(net::Network<double>& prod,
                                        const io::SliceSequence& sample) {
    using namespace detail;
    const std::size_t T = sample.T();
    InstrumentedRun run;

    struct LifCache {
        std::vector<Tensor<double>> in, u, o;
    };
    struct RnnCache {
        std::vector<Tensor<double>> x, h;
    };
    struct LstmCache {
        std::vector<Tensor<double>> x, c, tanh_c;
        std::vector<std::array<Tensor<double>, 4>> gate;
    };

    // gather layer handles (FC cells + optional readout, in order)
    struct LayerRef {
        net::FcLifLayer<double>* lif = nullptr;
        net::FcRnnLayer<double>* rnn = nullptr;
        net::FcLstmLayer<double>* lstm = nullptr;
        net::ReadoutLayer<double>* readout = nullptr;
    };
    std::vector<LayerRef> refs;
    for (auto& l : prod.layers) {
        LayerRef r;
        r.lif = dynamic_cast<net::FcLifLayer<double>*>(l.get());
        r.rnn = dynamic_cast<net::FcRnnLayer<double>*>(l.get());
        r.lstm = dynamic_cast<net::FcLstmLayer<double>*>(l.get());
        r.readout = dynamic_cast<net::ReadoutLayer<double>*>(l.get());
        require(r.lif || r.rnn || r.lstm || r.readout, Errc::config,
                "instrumented_run supports fully-connected stacks only");
        refs.push_back(r);
    }

    const std::size_t L = refs.size();
    std::vector<LifCache> lif_cache(L);
    std::vector<RnnCache> rnn_cache(L);
    std::vector<LstmCache> lstm_cache(L);

    // ---- forward ----
    std::vector<Tensor<double>> lif_u(L), lif_o(L), rnn_h(L), lstm_h(L), lstm_c(L);
    for (std::size_t li = 0; li < L; ++li) {
        if (refs[li].lif) {
            lif_u[li] = Tensor<double>({refs[li].lif->params.W.rows()});
            lif_o[li] = Tensor<double>({refs[li].lif->params.W.rows()});
        } else if (refs[li].rnn) {
            rnn_h[li] = Tensor<double>({refs[li].rnn->params.W1.rows()});
        } else if (refs[li].lstm) {
            lstm_h[li] = Tensor<double>({refs[li].lstm->params.width()});
            lstm_c[li] = Tensor<double>({refs[li].lstm->params.width()});
        }
    }

    for (std::size_t t = 0; t < T; ++t) {
        Tensor<double> x = slice_vector(sample, t);
        for (std::size_t li = 0; li < L; ++li) {
            if (auto* lif = refs[li].lif) {
                const auto& p = lif->params;
                Tensor<double> z;
                if (lif->input_binary())
                    matvec_binary(p.W, x, z, false, run.forward);
                else
                    matvec(p.W, x, z, false, run.forward);
                if (p.W_rec) matvec_binary(*p.W_rec, lif_o[li], z, true, run.forward);
                Tensor<double> u(z.shape), o(z.shape);
                const double lam = p.effective_leak();
                for (std::size_t i = 0; i < u.numel(); ++i) {
                    const double keep = p.reset_enabled ? (1.0 - lif_o[li].data[i]) : 1.0;
                    u.data[i] = lam * lif_u[li].data[i] * keep + z.data[i];
                    o.data[i] = u.data[i] >= p.u_th ? 1.0 : 0.0;
                }
                lif_cache[li].in.push_back(x);
                lif_cache[li].u.push_back(u);
                lif_cache[li].o.push_back(o);
                lif_u[li] = u;
                lif_o[li] = o;
                x = o;
            } else if (auto* rnn = refs[li].rnn) {
                const auto& p = rnn->params;
                Tensor<double> z;
                matvec(p.W1, x, z, false, run.forward);
                if (t > 0) matvec(p.W2, rnn_h[li], z, true, run.forward);
                for (std::size_t i = 0; i < z.numel(); ++i) z.data[i] += p.b.data[i];
                Tensor<double> h(z.shape);
                for (std::size_t i = 0; i < z.numel(); ++i) h.data[i] = std::tanh(z.data[i]);
                rnn_cache[li].x.push_back(x);
                rnn_cache[li].h.push_back(h);
                rnn_h[li] = h;
                x = h;
            } else if (auto* lstm = refs[li].lstm) {
                const auto& p = lstm->params;
                std::array<Tensor<double>, 4> act;
                for (int g = 0; g < 4; ++g) {
                    Tensor<double> z;
                    matvec(p.W1[g], x, z, false, run.forward);
                    if (t > 0) matvec(p.W2[g], lstm_h[li], z, true, run.forward);
                    for (std::size_t i = 0; i < z.numel(); ++i) z.data[i] += p.b[g].data[i];
                    act[g] = Tensor<double>(z.shape);
                    if (g == cells::kCandidate)
                        for (std::size_t i = 0; i < z.numel(); ++i) act[g].data[i] = std::tanh(z.data[i]);
                    else
                        for (std::size_t i = 0; i < z.numel(); ++i)
                            act[g].data[i] = 1.0 / (1.0 + std::exp(-z.data[i]));
                }
                Tensor<double> c_new(lstm_c[li].shape), tanh_c(lstm_c[li].shape), h_new(lstm_c[li].shape);
                for (std::size_t i = 0; i < c_new.numel(); ++i) {
                    c_new.data[i] = lstm_c[li].data[i] * act[cells::kForget].data[i] +
                                    act[cells::kCandidate].data[i] * act[cells::kInput].data[i];
                    tanh_c.data[i] = std::tanh(c_new.data[i]);
                    h_new.data[i] = tanh_c.data[i] * act[cells::kOutput].data[i];
                }
                lstm_cache[li].x.push_back(x);
                lstm_cache[li].gate.push_back(act);
                lstm_cache[li].c.push_back(c_new);
                lstm_cache[li].tanh_c.push_back(tanh_c);
                lstm_c[li] = c_new;
                lstm_h[li] = h_new;
                x = h_new;
            } else {
                auto* ro = refs[li].readout;
                Tensor<double> r;
                matvec(ro->W, x, r, false, run.forward);
                for (std::size_t i = 0; i < r.numel(); ++i) r.data[i] += ro->b.data[i];
                rnn_cache[li].x.push_back(x);  // reuse as readout input cache
                x = r;
            }
        }
        run.outputs.push_back(x);
    }

    // cross-check against the production forward (same math, same order)
    {
        std::vector<const io::SliceSequence*> batch{&sample};
        const auto prod_out = prod.forward(batch, /*train=*/false);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < prod_out[t].numel(); ++i)
                run.output_max_diff = std::max(
                    run.output_max_diff,
                    std::abs(static_cast<double>(prod_out[t].data[i]) - run.outputs[t].data[i]));
    }

    // ---- backward ----
    // loss gradients: the model's own rate-style loss (values are irrelevant
    // to the counts; every receiving product executes regardless)
    Tensor<double> Y({run.outputs[0].numel()});
    Y.data[0] = 1.0;
    Tensor<double> mean(Y.shape);
    for (const auto& o : run.outputs)
        for (std::size_t i = 0; i < mean.numel(); ++i)
            mean.data[i] += o.data[i] / static_cast<double>(T);
    Tensor<double> dloss(Y.shape);
    for (std::size_t i = 0; i < Y.numel(); ++i)
        dloss.data[i] = -(2.0 / static_cast<double>(T)) * (Y.data[i] - mean.data[i]);

    std::size_t lowest_param = 0;  // FC stacks: layer 0 always owns parameters

    std::vector<Tensor<double>> lif_carry(L), rnn_carry(L), lstm_hcarry(L), lstm_ccarry(L);
    for (std::size_t ti = T; ti-- > 0;) {
        Tensor<double> delta = dloss;  // same gradient at every step (rate loss)
        for (std::size_t li = L; li-- > 0;) {
            const bool want_below = li > lowest_param;
            if (auto* lif = refs[li].lif) {
                const auto& p = lif->params;
                Tensor<double> d_o = delta;
                const double lam = p.effective_leak();
                if (lif_carry[li].numel()) {
                    if (p.reset_enabled)
                        for (std::size_t i = 0; i < d_o.numel(); ++i)
                            d_o.data[i] += -lam * lif_carry[li].data[i] * lif_cache[li].u[ti].data[i];
                    if (p.W_rec) matvec_t(*p.W_rec, lif_carry[li], d_o, true, run.backward);
                }
                Tensor<double> d_u(d_o.shape);
                for (std::size_t i = 0; i < d_u.numel(); ++i) {
                    const double uv = lif_cache[li].u[ti].data[i] - p.u_th;
                    const double fp = (uv <= p.a / 2 && uv >= -p.a / 2) ? 1.0 / p.a : 0.0;
                    d_u.data[i] = d_o.data[i] * fp;
                    if (lif_carry[li].numel()) {
                        const double keep = p.reset_enabled ? (1.0 - lif_cache[li].o[ti].data[i]) : 1.0;
                        d_u.data[i] += lam * lif_carry[li].data[i] * keep;
                    }
                }
                lif_carry[li] = d_u;
                if (want_below) matvec_t(p.W, d_u, delta, false, run.backward);
            } else if (auto* rnn = refs[li].rnn) {
                const auto& p = rnn->params;
                Tensor<double> dz(rnn_cache[li].h[ti].shape);
                for (std::size_t i = 0; i < dz.numel(); ++i) {
                    double dh = delta.data[i];
                    if (rnn_carry[li].numel()) dh += rnn_carry[li].data[i];
                    const double h = rnn_cache[li].h[ti].data[i];
                    dz.data[i] = dh * (1.0 - h * h);
                }
                if (ti > 0)
                    matvec_t(p.W2, dz, rnn_carry[li], false, run.backward);
                else
                    rnn_carry[li] = Tensor<double>();
                if (want_below) matvec_t(p.W1, dz, delta, false, run.backward);
            } else if (auto* lstm = refs[li].lstm) {
                const auto& p = lstm->params;
                const auto& cache = lstm_cache[li];
                const std::size_t d = p.width();
                const std::size_t m_in = p.W1[0].cols();
                Tensor<double> dh(cache.c[ti].shape);
                for (std::size_t i = 0; i < d; ++i) {
                    dh.data[i] = delta.data[i];
                    if (lstm_hcarry[li].numel()) dh.data[i] += lstm_hcarry[li].data[i];
                }
                Tensor<double> dc(dh.shape);
                for (std::size_t i = 0; i < d; ++i) {
                    const double th = cache.tanh_c[ti].data[i];
                    dc.data[i] = dh.data[i] * cache.gate[ti][cells::kOutput].data[i] * (1.0 - th * th);
                    if (lstm_ccarry[li].numel()) dc.data[i] += lstm_ccarry[li].data[i];
                }
                const Tensor<double> c_prev =
                    ti > 0 ? cache.c[ti - 1] : Tensor<double>({d});
                std::array<Tensor<double>, 4> dz;
                for (int g = 0; g < 4; ++g) dz[g] = Tensor<double>({d});
                for (std::size_t i = 0; i < d; ++i) {
                    const double f = cache.gate[ti][cells::kForget].data[i];
                    const double ig = cache.gate[ti][cells::kInput].data[i];
                    const double og = cache.gate[ti][cells::kOutput].data[i];
                    const double gg = cache.gate[ti][cells::kCandidate].data[i];
                    dz[cells::kForget].data[i] = dc.data[i] * c_prev.data[i] * f * (1.0 - f);
                    dz[cells::kInput].data[i] = dc.data[i] * gg * ig * (1.0 - ig);
                    dz[cells::kOutput].data[i] = dh.data[i] * cache.tanh_c[ti].data[i] * og * (1.0 - og);
                    dz[cells::kCandidate].data[i] = dc.data[i] * ig * (1.0 - gg * gg);
                }

                // Jacobian-materialization accounting realization:
                // scale each W column set by the gate vector (MULs), then one
                // application pass per direction (MACs). The scaled matrices
                // already fold the full per-gate deltas, so the single
                // application uses a ones-vector "apply" of row sums.
                if (want_below) {
                    Tensor<double> J({m_in, d});
                    for (int g = 0; g < 4; ++g) {
                        for (std::size_t k = 0; k < m_in; ++k)
                            for (std::size_t j = 0; j < d; ++j)
                                J.at(k, j) += p.W1[g].at(j, k) * dz[g].data[j];
                        run.backward.muls += m_in * d;
                    }
                    delta = Tensor<double>({m_in});
                    for (std::size_t k = 0; k < m_in; ++k) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < d; ++j) s += J.at(k, j) * 1.0;
                        delta.data[k] = s;
                    }
                    run.backward.macs += m_in * d;
                }
                if (ti > 0) {
                    Tensor<double> J({d, d});
                    for (int g = 0; g < 4; ++g) {
                        for (std::size_t k = 0; k < d; ++k)
                            for (std::size_t j = 0; j < d; ++j)
                                J.at(k, j) += p.W2[g].at(j, k) * dz[g].data[j];
                        run.backward.muls += d * d;
                    }
                    lstm_hcarry[li] = Tensor<double>({d});
                    for (std::size_t k = 0; k < d; ++k) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < d; ++j) s += J.at(k, j) * 1.0;
                        lstm_hcarry[li].data[k] = s;
                    }
                    run.backward.macs += d * d;
                    lstm_ccarry[li] = Tensor<double>({d});
                    for (std::size_t i = 0; i < d; ++i)
                        lstm_ccarry[li].data[i] = dc.data[i] * cache.gate[ti][cells::kForget].data[i];
                } else {
                    lstm_hcarry[li] = Tensor<double>();
                    lstm_ccarry[li] = Tensor<double>();
                }
            } else {
                auto* ro = refs[li].readout;
                Tensor<double> below;
                matvec_t(ro->W, delta, below, false, run.backward);
                delta = std::move(below);
            }
            if (!want_below) break;
        }
    }
    return run;
}

}  // namespace nvsnn::testing
