#pragma once

#include "nvsnn/check/gradcheck.hpp"
#include "nvsnn/check/graph_oracle.hpp"
#include "nvsnn/training.hpp"

// The gradient-oracle suite: tiny double-precision networks checked against
// independent references. Vanilla RNN and LSTM analytic BPTT against central
// finite differences; the spiking path against graph reverse-accumulation
// with the surrogate derivative installed. Driven by both the CLI gradcheck
// subcommand and the acceptance suite.

namespace nvsnn::check {

struct SuiteReport {
    double max_err = 0.0;        // rel err (smooth models) or abs err (snn)
    std::size_t checked = 0;     // coordinates compared
    bool pass = false;
};

namespace detail {

inline net::NetworkConfig tiny_net_config(net::ModelKind kind, net::LossKind loss,
                                          const std::string& structure, std::uint32_t T) {
    net::NetworkConfig cfg;
    cfg.model_kind = kind;
    cfg.structure = structure;
    cfg.loss_kind = loss;
    cfg.readout = kind == net::ModelKind::snn ? net::ReadoutKind::spike_rate
                                              : net::ReadoutKind::linear_readout;
    cfg.T = T;
    cfg.dt_us = 1000;
    cfg.input = {2, 2, 2};
    cfg.cell.grad_width = 1.0;  // wide surrogate: tiny nets stay sensitive
    cfg.cell.leak = 0.5;
    cfg.parse_structure();
    return cfg;
}

inline io::SliceSequence random_input(Rng& rng, std::uint32_t T, double density) {
    io::SliceSequence s;
    s.dt_us = 1000;
    s.label = 0;
    s.data = Tensor<std::uint8_t>({T, 2, 2, 2});
    for (auto& v : s.data.data) v = rng.next_double() < density ? 1 : 0;
    return s;
}

}  // namespace detail

// RNN / LSTM: analytic full-net BPTT vs central finite differences, across
// the loss functions the models train with.
inline SuiteReport smooth_model_check(net::ModelKind kind, std::size_t n_seeds,
                                      std::uint64_t seed0 = 1) {
    SuiteReport rep;
    const net::LossKind losses[] = {net::LossKind::last_step, net::LossKind::per_step,
                                    net::LossKind::rate_inspired};
    for (std::size_t s = 0; s < n_seeds; ++s) {
        const auto loss_kind = losses[s % 3];
        auto cfg = detail::tiny_net_config(kind, loss_kind,
                                           s % 2 ? "Input-8FC-6FC-3" : "Input-7FC-3", 4);
        auto network = net::build<double>(cfg, seed0 + s);
        Rng rng(seed0 * 1000 + s);
        const io::SliceSequence sample = detail::random_input(rng, 4, 0.5);
        std::vector<const io::SliceSequence*> batch{&sample};
        Tensor<double> Y({1, 3});
        Y.data[rng.next_below(3)] = 1.0;

        network.zero_grads();
        const auto outputs = network.forward(batch, true);
        const auto loss = train::compute_loss(loss_kind, outputs, Y);
        network.backward(loss.grads);
        std::vector<Tensor<double>> analytic;
        for (auto& p : network.parameters()) analytic.push_back(*p.grad);

        auto params = network.parameters();
        auto loss_fn = [&] {
            return train::compute_loss(loss_kind, network.forward(batch, false), Y).loss;
        };
        std::vector<std::pair<std::string, Tensor<double>*>> fd_params;
        std::vector<const Tensor<double>*> fd_analytic;
        for (std::size_t i = 0; i < params.size(); ++i) {
            fd_params.push_back({params[i].name, params[i].value});
            fd_analytic.push_back(&analytic[i]);
        }
        const auto fd = testing::finite_diff_check(loss_fn, fd_params, fd_analytic);
        rep.max_err = std::max(rep.max_err, fd.max_rel_err);
        rep.checked += fd.checked;
    }
    rep.pass = rep.max_err <= 1e-5;
    return rep;
}

// SNN: analytic BPTT vs the unrolled-graph reverse accumulation, across the
// ablation-flag combinations and the cross-recurrence variant.
inline SuiteReport snn_oracle_check(std::size_t n_seeds, std::uint64_t seed0 = 1) {
    SuiteReport rep;
    for (std::size_t s = 0; s < n_seeds; ++s) {
        auto cfg = detail::tiny_net_config(net::ModelKind::snn, net::LossKind::snn_rate_mse,
                                           s % 2 ? "Input-8FC-6FC-3" : "Input-6FC-3", 4);
        cfg.cell.leakage_enabled = (s % 4) & 1;
        cfg.cell.reset_enabled = (s % 4) & 2;
        cfg.cell.cross_recurrence = (s % 5) == 0;
        auto network = net::build<double>(cfg, seed0 + s);
        Rng rng(seed0 * 2000 + s);
        const io::SliceSequence sample = detail::random_input(rng, 4, 0.5);
        std::vector<const io::SliceSequence*> batch{&sample};
        Tensor<double> Y({1, 3});
        Y.data[rng.next_below(3)] = 1.0;

        network.zero_grads();
        const auto outputs = network.forward(batch, true);
        const auto loss = train::compute_loss(cfg.loss_kind, outputs, Y);
        network.backward(loss.grads);

        std::vector<cells::LifParams<double>> layers;
        for (auto& l : network.layers)
            layers.push_back(dynamic_cast<net::FcLifLayer<double>*>(l.get())->params);
        std::vector<Tensor<double>> inputs;
        for (std::size_t t = 0; t < 4; ++t) {
            Tensor<double> x({8});
            for (std::size_t i = 0; i < 8; ++i)
                x.data[i] = static_cast<double>(sample.data.data[t * 8 + i]);
            inputs.push_back(x);
        }
        Tensor<double> y({3});
        for (std::size_t i = 0; i < 3; ++i) y.data[i] = Y.data[i];
        const auto oracle = testing::lif_graph_oracle(layers, inputs, y);

        auto params = network.parameters();
        std::size_t pi = 0;
        for (std::size_t n = 0; n < layers.size(); ++n) {
            for (std::size_t i = 0; i < oracle.dW[n].numel(); ++i)
                rep.max_err =
                    std::max(rep.max_err, std::abs(oracle.dW[n].data[i] - params[pi].grad->data[i]));
            rep.checked += oracle.dW[n].numel();
            ++pi;
            if (layers[n].W_rec) {
                for (std::size_t i = 0; i < oracle.dW_rec[n].numel(); ++i)
                    rep.max_err = std::max(
                        rep.max_err, std::abs(oracle.dW_rec[n].data[i] - params[pi].grad->data[i]));
                rep.checked += oracle.dW_rec[n].numel();
                ++pi;
            }
        }
    }
    rep.pass = rep.max_err <= 1e-10;
    return rep;
}

// Mutation check: replay the spiking backward recurrences with the sign of
// the reset-path term flipped and confirm the oracle flags the divergence.
// The unmutated replay must reproduce the production gradients exactly, so
// the replay is a faithful stand-in for the code under test.
struct MutationReport {
    bool replay_matches_production = false;
    bool mutant_caught = false;
    double mutant_err = 0.0;
};

inline MutationReport snn_mutation_check(std::uint64_t seed = 12345) {
    auto cfg = detail::tiny_net_config(net::ModelKind::snn, net::LossKind::snn_rate_mse,
                                       "Input-6FC-3", 4);
    auto network = net::build<double>(cfg, seed);
    Rng rng(seed);
    const io::SliceSequence sample = detail::random_input(rng, 4, 0.6);
    std::vector<const io::SliceSequence*> batch{&sample};
    Tensor<double> Y({1, 3});
    Y.data[0] = 1.0;

    network.zero_grads();
    const auto outputs = network.forward(batch, true);
    const auto loss = train::compute_loss(cfg.loss_kind, outputs, Y);
    network.backward(loss.grads);

    std::vector<net::FcLifLayer<double>*> lif;
    for (auto& l : network.layers)
        lif.push_back(dynamic_cast<net::FcLifLayer<double>*>(l.get()));
    const std::size_t L = lif.size(), T = 4;

    // closed-form backward replay over the production tape
    auto replay = [&](double reset_term_sign) {
        std::vector<Tensor<double>> dW;
        for (auto* l : lif) dW.emplace_back(l->params.W.shape);
        std::vector<Tensor<double>> carry(L);
        for (std::size_t ti = T; ti-- > 0;) {
            Tensor<double> spatial = loss.grads[ti];
            for (std::size_t n = L; n-- > 0;) {
                auto& p = lif[n]->params;
                const auto& tape = lif[n]->tape[ti];
                const double lam = p.effective_leak();
                Tensor<double> d_o = spatial;
                if (carry[n].numel() && p.reset_enabled)
                    for (std::size_t i = 0; i < d_o.numel(); ++i)
                        d_o.data[i] += reset_term_sign * lam * carry[n].data[i] * tape.u.data[i];
                Tensor<double> d_u(d_o.shape);
                const auto fp = cells::surrogate_grad(tape.u, p.u_th, p.a);
                for (std::size_t i = 0; i < d_u.numel(); ++i) {
                    d_u.data[i] = d_o.data[i] * fp.data[i];
                    if (carry[n].numel())
                        d_u.data[i] += lam * carry[n].data[i] * (1.0 - tape.o.data[i]);
                }
                kernels::outer_acc_binary(d_u, tape.in, dW[n]);
                if (n > 0) {
                    Tensor<double> below;
                    kernels::matmul(d_u, p.W, below);
                    spatial = std::move(below);
                }
                carry[n] = std::move(d_u);
            }
        }
        return dW;
    };

    MutationReport rep;
    const auto faithful = replay(-1.0);
    rep.replay_matches_production = true;
    auto params = network.parameters();
    for (std::size_t n = 0; n < L; ++n)
        for (std::size_t i = 0; i < faithful[n].numel(); ++i)
            if (faithful[n].data[i] != params[n].grad->data[i])
                rep.replay_matches_production = false;

    // flip the sign of the reset-path term of the membrane recurrence
    const auto mutant = replay(+1.0);
    std::vector<cells::LifParams<double>> layers;
    for (auto* l : lif) layers.push_back(l->params);
    std::vector<Tensor<double>> inputs;
    for (std::size_t t = 0; t < T; ++t) {
        Tensor<double> x({8});
        for (std::size_t i = 0; i < 8; ++i)
            x.data[i] = static_cast<double>(sample.data.data[t * 8 + i]);
        inputs.push_back(x);
    }
    Tensor<double> y({3});
    y.data[0] = 1.0;
    const auto oracle = testing::lif_graph_oracle(layers, inputs, y);
    for (std::size_t n = 0; n < L; ++n)
        for (std::size_t i = 0; i < mutant[n].numel(); ++i)
            rep.mutant_err = std::max(rep.mutant_err,
                                      std::abs(mutant[n].data[i] - oracle.dW[n].data[i]));
    rep.mutant_caught = rep.mutant_err > 1e-6;
    return rep;
}

}  // namespace nvsnn::check
