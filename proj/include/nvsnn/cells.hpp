#pragma once

#include <array>
#include <cmath>
#include <optional>

#include "nvsnn/kernels.hpp"

// Per-timestep forward steps and closed-form backward steps for the three
// recurrent cell types (LIF, vanilla RNN, LSTM). Everything is batch-major:
// states and activations are [B, width], weights are [out, in].
//
// Gradient hand-off convention used by all backward functions:
//   delta_spatial  — gradient arriving from the layer above at the same
//                    timestep, already projected through the upper layer's
//                    input weights (plus any loss gradient at the top layer)
//   delta_temporal — gradient arriving from the same layer at the next
//                    timestep, already projected through the recurrent path
//   delta_below    — what this step hands to the layer below (same timestep)
//   delta carry    — what this step hands to itself at the previous timestep
// Null pointers mark the boundaries (t = T, top layer); the corresponding
// terms are zero there.

namespace nvsnn::cells {

template <typename T>
void hadamard_acc(Tensor<T>& out, const Tensor<T>& a, const Tensor<T>& b, T scale) {
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += scale * a.data[i] * b.data[i];
}

template <typename T>
bool is_all_zero(const Tensor<T>& t) {
    for (const T& v : t.data)
        if (v != T{}) return false;
    return true;
}

// ---- LIF -------------------------------------------------------------------

template <typename T>
struct LifParams {
    Tensor<T> W;                      // [d, in] feedforward weights (no bias)
    std::optional<Tensor<T>> W_rec;   // [d, d] trainable cross-recurrence (variant)
    T u_th = static_cast<T>(0.3);
    T leak = static_cast<T>(0.3);     // e^(-dt/tau)
    T a = static_cast<T>(0.25);       // surrogate gradient width
    bool leakage_enabled = true;      // off: leak factor replaced by 1
    bool reset_enabled = true;        // off: (1 - o^{t-1}) factor dropped

    T effective_leak() const { return leakage_enabled ? leak : static_cast<T>(1); }
};

template <typename T>
struct LifState {
    Tensor<T> u;  // membrane potential [B, d]
    Tensor<T> o;  // last output spikes [B, d], elements in {0,1}

    void reset(std::size_t batch, std::size_t d) {
        u = Tensor<T>({batch, d});
        o = Tensor<T>({batch, d});
    }
};

template <typename T>
struct LifTapeEntry {
    Tensor<T> in;      // o^{t,n-1} input spikes [B, in]
    Tensor<T> u;       // u^{t,n}
    Tensor<T> o;       // o^{t,n}
    Tensor<T> o_prev;  // o^{t-1,n}; kept for the cross-recurrence weight gradient
};

template <typename T>
struct LifGrads {
    Tensor<T> dW;
    std::optional<Tensor<T>> dW_rec;

    explicit LifGrads(const LifParams<T>& p) : dW(p.W.shape) {
        if (p.W_rec) dW_rec = Tensor<T>(p.W_rec->shape);
    }
};

// Rectangular surrogate derivative of the firing function:
// 1/a where |u - u_th| <= a/2 (boundary included), else 0.
template <typename T>
Tensor<T> surrogate_grad(const Tensor<T>& u, T u_th, T a) {
    require(a > T{}, Errc::config, "surrogate width must be positive");
    Tensor<T> g(u.shape);
    const T half = a / static_cast<T>(2);
    const T inv = static_cast<T>(1) / a;
    for (std::size_t i = 0; i < u.numel(); ++i) {
        const T d = u.data[i] - u_th;
        g.data[i] = (d <= half && d >= -half) ? inv : T{};
    }
    return g;
}

// u^t = leak * u^{t-1} o (1 - o^{t-1}) + W o^{t,n-1} [+ W_rec o^{t-1,n}]
// o^t = 1 where u^t >= u_th (equality fires)
// in_binary selects the event-driven drive (inputs are spikes in {0,1}).
template <typename T>
void lif_step(const LifParams<T>& p, LifState<T>& state, const Tensor<T>& in,
              LifTapeEntry<T>* tape, bool in_binary = true) {
    require(in.cols() == p.W.cols(), Errc::shape_mismatch, "lif_step: input width mismatch");
    const std::size_t batch = in.rows(), d = p.W.rows();
    require(state.u.rows() == batch && state.u.cols() == d, Errc::shape_mismatch,
            "lif_step: state shape mismatch");

    if (tape) {
        tape->in = in;
        tape->o_prev = state.o;
    }

    Tensor<T> z;
    if (in_binary)
        kernels::matmul_nt_binary(in, p.W, z);
    else
        kernels::matmul_nt(in, p.W, z);
    if (p.W_rec) kernels::matmul_nt_binary(state.o, *p.W_rec, z, /*accumulate=*/true);

    const T lam = p.effective_leak();
    Tensor<T> u_new({batch, d});
    for (std::size_t i = 0; i < u_new.numel(); ++i) {
        const T keep = p.reset_enabled ? (static_cast<T>(1) - state.o.data[i]) : static_cast<T>(1);
        u_new.data[i] = lam * state.u.data[i] * keep + z.data[i];
    }
    Tensor<T> o_new({batch, d});
    for (std::size_t i = 0; i < o_new.numel(); ++i)
        o_new.data[i] = (u_new.data[i] >= p.u_th) ? static_cast<T>(1) : T{};

    if (tape) {
        tape->u = u_new;
        tape->o = o_new;
    }
    state.u = std::move(u_new);
    state.o = std::move(o_new);
}

template <typename T>
struct LifBackwardOut {
    Tensor<T> delta_o;  // do^{t,n}
    Tensor<T> delta_u;  // du^{t,n}; recurrent carry and dW driver
};

// do^{t,n} = delta_spatial - leak * du^{t+1,n} o u^{t,n} [+ W_rec^T du^{t+1,n}]
// du^{t,n} = do^{t,n} o f' + leak * du^{t+1,n} o (1 - o^{t,n})
// dW      += du^{t,n} (o^{t,n-1})^T
// The reset-path term and the (1 - o) factor follow the ablation flags the
// forward pass used.
template <typename T>
LifBackwardOut<T> lif_backward(const LifParams<T>& p, const LifTapeEntry<T>& tape,
                               const Tensor<T>& delta_spatial, const Tensor<T>* delta_u_next,
                               LifGrads<T>& grads, bool in_binary = true) {
    require(tape.u.numel() > 0, Errc::missing_tape, "lif_backward: tape entry missing");
    const T lam = p.effective_leak();

    LifBackwardOut<T> out;
    out.delta_o = delta_spatial;
    if (delta_u_next) {
        if (p.reset_enabled) hadamard_acc(out.delta_o, *delta_u_next, tape.u, -lam);
        if (p.W_rec) {
            Tensor<T> proj;
            kernels::matmul(*delta_u_next, *p.W_rec, proj);
            for (std::size_t i = 0; i < out.delta_o.numel(); ++i) out.delta_o.data[i] += proj.data[i];
        }
    }

    const Tensor<T> fp = surrogate_grad(tape.u, p.u_th, p.a);
    out.delta_u = Tensor<T>(out.delta_o.shape);
    for (std::size_t i = 0; i < out.delta_u.numel(); ++i)
        out.delta_u.data[i] = out.delta_o.data[i] * fp.data[i];
    if (delta_u_next) {
        for (std::size_t i = 0; i < out.delta_u.numel(); ++i) {
            const T keep = p.reset_enabled ? (static_cast<T>(1) - tape.o.data[i]) : static_cast<T>(1);
            out.delta_u.data[i] += lam * delta_u_next->data[i] * keep;
        }
    }

    if (in_binary)
        kernels::outer_acc_binary(out.delta_u, tape.in, grads.dW);
    else
        kernels::matmul_tn(out.delta_u, tape.in, grads.dW, /*accumulate=*/true);
    if (p.W_rec) kernels::outer_acc_binary(out.delta_u, tape.o_prev, *grads.dW_rec);
    return out;
}

// ---- vanilla RNN ------------------------------------------------------------

template <typename T>
struct RnnParams {
    Tensor<T> W1;  // [d, in]
    Tensor<T> W2;  // [d, d]
    Tensor<T> b;   // [d]
};

template <typename T>
struct RnnTapeEntry {
    Tensor<T> x;       // h^{t,n-1}
    Tensor<T> h;       // h^{t,n} (tanh output; theta' = 1 - h^2)
    Tensor<T> h_prev;  // h^{t-1,n}
};

template <typename T>
struct RnnGrads {
    Tensor<T> dW1, dW2, db;
    explicit RnnGrads(const RnnParams<T>& p) : dW1(p.W1.shape), dW2(p.W2.shape), db(p.b.shape) {}
};

// h^{t,n} = tanh(W1 h^{t,n-1} + W2 h^{t-1,n} + b)
template <typename T>
void rnn_step(const RnnParams<T>& p, Tensor<T>& h_state, const Tensor<T>& x, bool x_binary,
              RnnTapeEntry<T>* tape) {
    require(x.cols() == p.W1.cols(), Errc::shape_mismatch, "rnn_step: input width mismatch");
    const std::size_t batch = x.rows();
    if (tape) {
        tape->x = x;
        tape->h_prev = h_state;
    }
    Tensor<T> z;
    if (x_binary)
        kernels::matmul_nt_binary(x, p.W1, z);
    else
        kernels::matmul_nt(x, p.W1, z);
    if (h_state.numel() > 0)
        kernels::matmul_nt(h_state, p.W2, z, /*accumulate=*/true);
    kernels::add_row_vector(z, p.b);
    Tensor<T> h({batch, p.W1.rows()});
    for (std::size_t i = 0; i < h.numel(); ++i) h.data[i] = std::tanh(z.data[i]);
    if (tape) tape->h = h;
    h_state = std::move(h);
}

template <typename T>
struct RnnBackwardOut {
    Tensor<T> delta_below;  // dz * W1, handed to layer n-1 at time t
    Tensor<T> delta_carry;  // dz * W2, handed to this layer at time t-1
};

// dh^{t,n} = delta_spatial + delta_temporal (each already theta'-weighted and
// projected on the sending side); parameter grads use dz = dh o (1 - h^2).
// want_below / want_carry let the driver skip projections nobody consumes
// (bottom layer, t = 1).
template <typename T>
RnnBackwardOut<T> rnn_backward(const RnnParams<T>& p, const RnnTapeEntry<T>& tape, bool x_binary,
                               const Tensor<T>& delta_spatial, const Tensor<T>* delta_temporal,
                               RnnGrads<T>& grads, bool want_below = true, bool want_carry = true) {
    require(tape.h.numel() > 0, Errc::missing_tape, "rnn_backward: tape entry missing");
    Tensor<T> dz(tape.h.shape);
    for (std::size_t i = 0; i < dz.numel(); ++i) {
        T dh = delta_spatial.data[i];
        if (delta_temporal) dh += delta_temporal->data[i];
        dz.data[i] = dh * (static_cast<T>(1) - tape.h.data[i] * tape.h.data[i]);
    }

    if (x_binary)
        kernels::outer_acc_binary(dz, tape.x, grads.dW1);
    else
        kernels::matmul_tn(dz, tape.x, grads.dW1, /*accumulate=*/true);
    if (tape.h_prev.numel() > 0 && !is_all_zero(tape.h_prev))
        kernels::matmul_tn(dz, tape.h_prev, grads.dW2, /*accumulate=*/true);
    kernels::sum_rows_acc(dz, grads.db);

    RnnBackwardOut<T> out;
    if (want_below) kernels::matmul(dz, p.W1, out.delta_below);
    if (want_carry) kernels::matmul(dz, p.W2, out.delta_carry);
    return out;
}

// ---- LSTM --------------------------------------------------------------------

enum Gate { kForget = 0, kInput = 1, kOutput = 2, kCandidate = 3 };
inline constexpr std::array<const char*, 4> kGateNames = {"f", "i", "o", "g"};

template <typename T>
struct LstmParams {
    std::array<Tensor<T>, 4> W1;  // [d, in] per gate
    std::array<Tensor<T>, 4> W2;  // [d, d] per gate
    std::array<Tensor<T>, 4> b;   // [d] per gate

    std::size_t width() const { return W1[0].rows(); }
};

template <typename T>
struct LstmState {
    Tensor<T> h, c;
    void reset(std::size_t batch, std::size_t d) {
        h = Tensor<T>({batch, d});
        c = Tensor<T>({batch, d});
    }
};

// Minimal sufficient cache: theta(c) and the previous states cover every
// term of the backward pass, so c and h themselves are not stored.
template <typename T>
struct LstmTapeEntry {
    Tensor<T> x;
    std::array<Tensor<T>, 4> gate;  // f, i, o, g after their activations
    Tensor<T> tanh_c;               // theta(c^{t,n})
    Tensor<T> c_prev, h_prev;
};

template <typename T>
struct LstmGrads {
    std::array<Tensor<T>, 4> dW1, dW2, db;
    explicit LstmGrads(const LstmParams<T>& p) {
        for (int g = 0; g < 4; ++g) {
            dW1[g] = Tensor<T>(p.W1[g].shape);
            dW2[g] = Tensor<T>(p.W2[g].shape);
            db[g] = Tensor<T>(p.b[g].shape);
        }
    }
};

// f,i,o = sigmoid(...), g = tanh(...); c^t = c^{t-1} o f + g o i; h^t = tanh(c^t) o o
template <typename T>
void lstm_step(const LstmParams<T>& p, LstmState<T>& state, const Tensor<T>& x, bool x_binary,
               LstmTapeEntry<T>* tape) {
    const std::size_t batch = x.rows(), d = p.width();
    require(x.cols() == p.W1[0].cols(), Errc::shape_mismatch, "lstm_step: input width mismatch");
    if (tape) {
        tape->x = x;
        tape->c_prev = state.c;
        tape->h_prev = state.h;
    }
    const bool have_h = state.h.numel() > 0 && !is_all_zero(state.h);
    std::array<Tensor<T>, 4> act;
    for (int g = 0; g < 4; ++g) {
        Tensor<T> z;
        if (x_binary)
            kernels::matmul_nt_binary(x, p.W1[g], z);
        else
            kernels::matmul_nt(x, p.W1[g], z);
        if (have_h) kernels::matmul_nt(state.h, p.W2[g], z, /*accumulate=*/true);
        kernels::add_row_vector(z, p.b[g]);
        act[g] = Tensor<T>({batch, d});
        if (g == kCandidate)
            for (std::size_t i = 0; i < z.numel(); ++i) act[g].data[i] = std::tanh(z.data[i]);
        else
            for (std::size_t i = 0; i < z.numel(); ++i)
                act[g].data[i] = static_cast<T>(1) / (static_cast<T>(1) + std::exp(-z.data[i]));
    }

    Tensor<T> c_new({batch, d}), tanh_c({batch, d}), h_new({batch, d});
    for (std::size_t i = 0; i < c_new.numel(); ++i) {
        c_new.data[i] = state.c.data[i] * act[kForget].data[i] +
                        act[kCandidate].data[i] * act[kInput].data[i];
        tanh_c.data[i] = std::tanh(c_new.data[i]);
        h_new.data[i] = tanh_c.data[i] * act[kOutput].data[i];
    }

    if (tape) {
        tape->gate = act;
        tape->tanh_c = tanh_c;
    }
    state.c = std::move(c_new);
    state.h = std::move(h_new);
}

template <typename T>
struct LstmBackwardOut {
    Tensor<T> delta_below;    // sum_g dz_g * W1_g
    Tensor<T> delta_h_carry;  // sum_g dz_g * W2_g
    Tensor<T> delta_c_carry;  // dc^t o f^t (cell-state recurrence path)
};

template <typename T>
LstmBackwardOut<T> lstm_backward(const LstmParams<T>& p, const LstmTapeEntry<T>& tape, bool x_binary,
                                 const Tensor<T>& delta_spatial, const Tensor<T>* delta_h_temporal,
                                 const Tensor<T>* delta_c_next, LstmGrads<T>& grads,
                                 bool want_below = true, bool want_carry = true) {
    require(tape.tanh_c.numel() > 0, Errc::missing_tape, "lstm_backward: tape entry missing");
    const std::size_t n = tape.tanh_c.numel();

    Tensor<T> dh(tape.tanh_c.shape);
    for (std::size_t i = 0; i < n; ++i) {
        dh.data[i] = delta_spatial.data[i];
        if (delta_h_temporal) dh.data[i] += delta_h_temporal->data[i];
    }

    // dc^t = dh o o o theta'(c) + dc^{t+1} o f^{t+1} (the latter arrives as delta_c_next)
    Tensor<T> dc(tape.tanh_c.shape);
    for (std::size_t i = 0; i < n; ++i) {
        const T th = tape.tanh_c.data[i];
        dc.data[i] = dh.data[i] * tape.gate[kOutput].data[i] * (static_cast<T>(1) - th * th);
        if (delta_c_next) dc.data[i] += delta_c_next->data[i];
    }

    // gate pre-activation gradients (diag(.) products as elementwise multiplies)
    std::array<Tensor<T>, 4> dz;
    for (int g = 0; g < 4; ++g) dz[g] = Tensor<T>(tape.tanh_c.shape);
    for (std::size_t i = 0; i < n; ++i) {
        const T f = tape.gate[kForget].data[i];
        const T ig = tape.gate[kInput].data[i];
        const T og = tape.gate[kOutput].data[i];
        const T gg = tape.gate[kCandidate].data[i];
        dz[kForget].data[i] = dc.data[i] * tape.c_prev.data[i] * f * (static_cast<T>(1) - f);
        dz[kInput].data[i] = dc.data[i] * gg * ig * (static_cast<T>(1) - ig);
        dz[kOutput].data[i] = dh.data[i] * tape.tanh_c.data[i] * og * (static_cast<T>(1) - og);
        dz[kCandidate].data[i] = dc.data[i] * ig * (static_cast<T>(1) - gg * gg);
    }

    const bool have_h_prev = tape.h_prev.numel() > 0 && !is_all_zero(tape.h_prev);
    LstmBackwardOut<T> out;
    out.delta_below = Tensor<T>({tape.x.rows(), tape.x.cols()});
    out.delta_h_carry = Tensor<T>(tape.tanh_c.shape);
    for (int g = 0; g < 4; ++g) {
        if (x_binary)
            kernels::outer_acc_binary(dz[g], tape.x, grads.dW1[g]);
        else
            kernels::matmul_tn(dz[g], tape.x, grads.dW1[g], /*accumulate=*/true);
        if (have_h_prev) kernels::matmul_tn(dz[g], tape.h_prev, grads.dW2[g], /*accumulate=*/true);
        kernels::sum_rows_acc(dz[g], grads.db[g]);

        Tensor<T> tmp;
        if (want_below) {
            kernels::matmul(dz[g], p.W1[g], tmp);
            for (std::size_t i = 0; i < out.delta_below.numel(); ++i)
                out.delta_below.data[i] += tmp.data[i];
        }
        if (want_carry) {
            kernels::matmul(dz[g], p.W2[g], tmp);
            for (std::size_t i = 0; i < out.delta_h_carry.numel(); ++i)
                out.delta_h_carry.data[i] += tmp.data[i];
        }
    }

    if (want_carry) {
        out.delta_c_carry = Tensor<T>(tape.tanh_c.shape);
        for (std::size_t i = 0; i < n; ++i)
            out.delta_c_carry.data[i] = dc.data[i] * tape.gate[kForget].data[i];
    }
    return out;
}

}  // namespace nvsnn::cells
