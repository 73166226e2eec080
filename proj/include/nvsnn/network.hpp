#pragma once

#include <memory>
#include <sstream>
#include <string>

#include "nvsnn/cells.hpp"
#include "nvsnn/event_io.hpp"

namespace nvsnn::net {

enum class ModelKind { snn, rnn, lstm };
enum class LossKind { snn_rate_mse, last_step, per_step, rate_inspired };
enum class ReadoutKind { spike_rate, linear_readout };

std::string to_string(ModelKind m);
std::string to_string(LossKind l);
ModelKind model_kind_from_string(const std::string& s);
LossKind loss_kind_from_string(const std::string& s);

struct CellOptions {
    double u_th = 0.3;
    double leak = 0.3;  // e^(-dt/tau)
    double grad_width = 0.25;
    bool leakage_enabled = true;
    bool reset_enabled = true;
    bool cross_recurrence = false;
    bool adaptive_leakage = false;
};

struct InputGeometry {
    std::size_t channels = 2;
    std::size_t height = 0;
    std::size_t width = 0;
};

struct LayerSpec {
    enum class Kind { max_pool, avg_pool, conv_cell, fc_cell };
    Kind kind;
    std::size_t arg;  // pool kernel size or cell width / feature maps
};

struct NetworkConfig {
    ModelKind model_kind = ModelKind::snn;
    std::string structure;  // e.g. "Input-MP4-512FC-11"
    std::vector<LayerSpec> stack;
    std::size_t n_classes = 0;
    LossKind loss_kind = LossKind::snn_rate_mse;
    ReadoutKind readout = ReadoutKind::spike_rate;
    std::uint32_t T = 1;
    std::uint32_t dt_us = 1;
    InputGeometry input;
    CellOptions cell;
    std::uint64_t seed = 1;

    void parse_structure();  // fills stack + n_classes from structure
    void validate() const;
};

// ---- layers ------------------------------------------------------------------

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;

    // per-sample shape trace at build time, e.g. [2,32,32] -> [64,32,32]
    virtual std::vector<std::size_t> out_shape(const std::vector<std::size_t>& in) = 0;
    virtual void begin_sequence(std::size_t batch, bool train) = 0;
    virtual const Tensor<T>& forward_step(const Tensor<T>& in, std::size_t t) = 0;
    // d_out: gradient w.r.t. this layer's output at timestep t (spatial part,
    // already projected by the layer above; for the top layer the loss grad).
    // Returns the gradient w.r.t. this layer's input, or an empty tensor when
    // want_below is false.
    virtual Tensor<T> backward_step(const Tensor<T>& d_out, std::size_t t, bool want_below) = 0;
    virtual void begin_backward() {}
    virtual std::vector<NamedParam<T>> parameters() { return {}; }
    virtual bool output_binary() const = 0;
    virtual std::string describe() const = 0;

    void zero_grads() {
        for (auto& p : parameters())
            if (p.grad) p.grad->zero();
    }
};

template <typename T>
Tensor<T> reshaped(const Tensor<T>& src, std::vector<std::size_t> shape) {
    Tensor<T> out;
    out.shape = std::move(shape);
    out.data = src.data;
    require(out.numel() == src.numel(), Errc::shape_mismatch, "reshape element count mismatch");
    return out;
}

// flatten [B, ...] -> [B, features]
template <typename T>
Tensor<T> flatten_batch(const Tensor<T>& in) {
    if (in.ndim() == 2) return in;
    return reshaped(in, {in.dim(0), in.numel() / in.dim(0)});
}

template <typename T>
class PoolLayer final : public Layer<T> {
public:
    PoolLayer(bool is_max, std::size_t k, bool in_binary)
        : is_max_(is_max), k_(k), in_binary_(in_binary) {}

    std::vector<std::size_t> out_shape(const std::vector<std::size_t>& in) override {
        require(in.size() == 3, Errc::config, "pooling requires a [C,H,W] input");
        require(in[1] % k_ == 0 && in[2] % k_ == 0, Errc::shape_mismatch,
                "pooling dims not divisible by kernel " + std::to_string(k_));
        in_shape_ = in;
        return {in[0], in[1] / k_, in[2] / k_};
    }

    void begin_sequence(std::size_t batch, bool train) override {
        batch_ = batch;
        train_ = train;
        argmax_tape.clear();
    }

    const Tensor<T>& forward_step(const Tensor<T>& in, std::size_t t) override {
        const Tensor<T> shaped =
            in.ndim() == 4 ? in : reshaped(in, {batch_, in_shape_[0], in_shape_[1], in_shape_[2]});
        if (is_max_) {
            Tensor<std::uint32_t> arg;
            kernels::maxpool_batch(shaped, k_, out_, arg);
            if (train_) {
                if (argmax_tape.size() <= t) argmax_tape.resize(t + 1);
                argmax_tape[t] = std::move(arg);
            }
        } else {
            kernels::avgpool_batch(shaped, k_, out_);
        }
        return out_;
    }

    Tensor<T> backward_step(const Tensor<T>& d_out, std::size_t t, bool want_below) override {
        if (!want_below) return {};
        const Tensor<T> shaped =
            d_out.ndim() == 4
                ? d_out
                : reshaped(d_out, {batch_, in_shape_[0], in_shape_[1] / k_, in_shape_[2] / k_});
        Tensor<T> dx;
        if (is_max_) {
            require(t < argmax_tape.size() && argmax_tape[t].numel() > 0, Errc::missing_tape,
                    "maxpool backward without argmax tape");
            kernels::maxpool_backward_batch(shaped, argmax_tape[t], k_, dx);
        } else {
            kernels::avgpool_backward_batch(shaped, k_, dx);
        }
        return dx;
    }

    bool output_binary() const override { return is_max_ && in_binary_; }
    std::string describe() const override {
        return (is_max_ ? "MP" : "AP") + std::to_string(k_);
    }

    std::vector<Tensor<std::uint32_t>> argmax_tape;  // public for tape tests

private:
    bool is_max_;
    std::size_t k_;
    bool in_binary_;
    std::vector<std::size_t> in_shape_;
    std::size_t batch_ = 0;
    bool train_ = false;
    Tensor<T> out_;
};

template <typename T>
class FcLifLayer final : public Layer<T> {
public:
    FcLifLayer(std::size_t width, const CellOptions& opt, int index, bool in_binary = true)
        : width_(width), index_(index), in_binary_(in_binary) {
        params.u_th = static_cast<T>(opt.u_th);
        params.leak = static_cast<T>(opt.leak);
        params.a = static_cast<T>(opt.grad_width);
        params.leakage_enabled = opt.leakage_enabled;
        params.reset_enabled = opt.reset_enabled;
        xrec_ = opt.cross_recurrence;
    }

    bool input_binary() const { return in_binary_; }

    std::vector<std::size_t> out_shape(const std::vector<std::size_t>& in) override {
        in_features_ = 1;
        for (std::size_t d : in) in_features_ *= d;
        params.W = Tensor<T>({width_, in_features_});
        if (xrec_) params.W_rec = Tensor<T>({width_, width_});
        grads_ = std::make_unique<cells::LifGrads<T>>(params);
        return {width_};
    }

    void begin_sequence(std::size_t batch, bool train) override {
        state.reset(batch, width_);
        train_ = train;
        tape.clear();
    }

    const Tensor<T>& forward_step(const Tensor<T>& in, std::size_t t) override {
        const Tensor<T> flat = flatten_batch(in);
        if (train_) {
            if (tape.size() <= t) tape.resize(t + 1);
            cells::lif_step(params, state, flat, &tape[t], in_binary_);
        } else {
            cells::lif_step(params, state, flat, static_cast<cells::LifTapeEntry<T>*>(nullptr),
                            in_binary_);
        }
        return state.o;
    }

    void begin_backward() override { carry_ = Tensor<T>(); }

    Tensor<T> backward_step(const Tensor<T>& d_out, std::size_t t, bool want_below) override {
        require(t < tape.size(), Errc::missing_tape, "lif backward without tape");
        auto out = cells::lif_backward(params, tape[t], d_out,
                                       carry_.numel() ? &carry_ : nullptr, *grads_, in_binary_);
        carry_ = std::move(out.delta_u);
        if (!want_below) return {};
        Tensor<T> below;
        kernels::matmul(carry_, params.W, below);
        return below;
    }

    std::vector<NamedParam<T>> parameters() override {
        std::string p = "L" + std::to_string(index_) + ".";
        std::vector<NamedParam<T>> v{{p + "W", &params.W, &grads_->dW}};
        if (params.W_rec) v.push_back({p + "W_rec", &*params.W_rec, &*grads_->dW_rec});
        return v;
    }

    bool output_binary() const override { return true; }
    std::string describe() const override { return std::to_string(width_) + "FC(lif)"; }

    cells::LifParams<T> params;
    cells::LifState<T> state;
    std::vector<cells::LifTapeEntry<T>> tape;

private:
    std::size_t width_, in_features_ = 0;
    int index_;
    bool in_binary_ = true, xrec_ = false, train_ = false;
    Tensor<T> carry_;
    std::unique_ptr<cells::LifGrads<T>> grads_;
};

template <typename T>
class FcRnnLayer final : public Layer<T> {
public:
    FcRnnLayer(std::size_t width, bool in_binary, int index)
        : width_(width), in_binary_(in_binary), index_(index) {}

    std::vector<std::size_t> out_shape(const std::vector<std::size_t>& in) override {
        in_features_ = 1;
        for (std::size_t d : in) in_features_ *= d;
        params.W1 = Tensor<T>({width_, in_features_});
        params.W2 = Tensor<T>({width_, width_});
        params.b = Tensor<T>({width_});
        grads_ = std::make_unique<cells::RnnGrads<T>>(params);
        return {width_};
    }

    void begin_sequence(std::size_t batch, bool train) override {
        h_ = Tensor<T>({batch, width_});
        train_ = train;
        tape.clear();
    }

    const Tensor<T>& forward_step(const Tensor<T>& in, std::size_t t) override {
        // binary spike inputs are treated as ordinary values here; the
        // event-driven drive is an SNN-side shortcut
        const Tensor<T> flat = flatten_batch(in);
        if (train_) {
            if (tape.size() <= t) tape.resize(t + 1);
            cells::rnn_step(params, h_, flat, /*x_binary=*/false, &tape[t]);
        } else {
            cells::rnn_step(params, h_, flat, /*x_binary=*/false,
                            static_cast<cells::RnnTapeEntry<T>*>(nullptr));
        }
        return h_;
    }

    void begin_backward() override { carry_ = Tensor<T>(); }

    Tensor<T> backward_step(const Tensor<T>& d_out, std::size_t t, bool want_below) override {
        require(t < tape.size(), Errc::missing_tape, "rnn backward without tape");
        auto out = cells::rnn_backward(params, tape[t], in_binary_, d_out,
                                       carry_.numel() ? &carry_ : nullptr, *grads_, want_below,
                                       /*want_carry=*/t > 0);
        carry_ = std::move(out.delta_carry);
        return std::move(out.delta_below);
    }

    std::vector<NamedParam<T>> parameters() override {
        std::string p = "L" + std::to_string(index_) + ".";
        return {{p + "W1", &params.W1, &grads_->dW1},
                {p + "W2", &params.W2, &grads_->dW2},
                {p + "b", &params.b, &grads_->db}};
    }

    bool output_binary() const override { return false; }
    std::string describe() const override { return std::to_string(width_) + "FC(rnn)"; }

    cells::RnnParams<T> params;
    std::vector<cells::RnnTapeEntry<T>> tape;

private:
    std::size_t width_, in_features_ = 0;
    bool in_binary_, train_ = false;
    int index_;
    Tensor<T> h_, carry_;
    std::unique_ptr<cells::RnnGrads<T>> grads_;
};

template <typename T>
class FcLstmLayer final : public Layer<T> {
public:
    FcLstmLayer(std::size_t width, bool in_binary, int index)
        : width_(width), in_binary_(in_binary), index_(index) {}

    std::vector<std::size_t> out_shape(const std::vector<std::size_t>& in) override {
        in_features_ = 1;
        for (std::size_t d : in) in_features_ *= d;
        for (int g = 0; g < 4; ++g) {
            params.W1[g] = Tensor<T>({width_, in_features_});
            params.W2[g] = Tensor<T>({width_, width_});
            params.b[g] = Tensor<T>({width_});
        }
        grads_ = std::make_unique<cells::LstmGrads<T>>(params);
        return {width_};
    }

    void begin_sequence(std::size_t batch, bool train) override {
        state.reset(batch, width_);
        train_ = train;
        tape.clear();
    }

    const Tensor<T>& forward_step(const Tensor<T>& in, std::size_t t) override {
        const Tensor<T> flat = flatten_batch(in);
        if (train_) {
            if (tape.size() <= t) tape.resize(t + 1);
            cells::lstm_step(params, state, flat, /*x_binary=*/false, &tape[t]);
        } else {
            cells::lstm_step(params, state, flat, /*x_binary=*/false,
                             static_cast<cells::LstmTapeEntry<T>*>(nullptr));
        }
        return state.h;
    }

    void begin_backward() override {
        h_carry_ = Tensor<T>();
        c_carry_ = Tensor<T>();
    }

    Tensor<T> backward_step(const Tensor<T>& d_out, std::size_t t, bool want_below) override {
        require(t < tape.size(), Errc::missing_tape, "lstm backward without tape");
        auto out = cells::lstm_backward(params, tape[t], in_binary_, d_out,
                                        h_carry_.numel() ? &h_carry_ : nullptr,
                                        c_carry_.numel() ? &c_carry_ : nullptr, *grads_, want_below,
                                        /*want_carry=*/t > 0);
        h_carry_ = std::move(out.delta_h_carry);
        c_carry_ = std::move(out.delta_c_carry);
        return std::move(out.delta_below);
    }

    std::vector<NamedParam<T>> parameters() override {
        std::string p = "L" + std::to_string(index_) + ".";
        std::vector<NamedParam<T>> v;
        for (int g = 0; g < 4; ++g) {
            const std::string gn = cells::kGateNames[g];
            v.push_back({p + "W" + gn + "1", &params.W1[g], &grads_->dW1[g]});
            v.push_back({p + "W" + gn + "2", &params.W2[g], &grads_->dW2[g]});
            v.push_back({p + "b" + gn, &params.b[g], &grads_->db[g]});
        }
        return v;
    }

    bool output_binary() const override { return false; }
    std::string describe() const override { return std::to_string(width_) + "FC(lstm)"; }

    cells::LstmParams<T> params;
    cells::LstmState<T> state;
    std::vector<cells::LstmTapeEntry<T>> tape;

private:
    std::size_t width_, in_features_ = 0;
    bool in_binary_, train_ = false;
    int index_;
    Tensor<T> h_carry_, c_carry_;
    std::unique_ptr<cells::LstmGrads<T>> grads_;
};

// Per-timestep linear readout r^t = W^y h^t + b (RNN/LSTM only).
template <typename T>
class ReadoutLayer final : public Layer<T> {
public:
    ReadoutLayer(std::size_t classes, int index) : classes_(classes), index_(index) {}

    std::vector<std::size_t> out_shape(const std::vector<std::size_t>& in) override {
        require(in.size() == 1, Errc::config, "readout expects a flat feature vector");
        in_features_ = in[0];
        W = Tensor<T>({classes_, in_features_});
        b = Tensor<T>({classes_});
        dW = Tensor<T>(W.shape);
        db = Tensor<T>(b.shape);
        return {classes_};
    }

    void begin_sequence(std::size_t batch, bool train) override {
        (void)batch;
        train_ = train;
        tape.clear();
    }

    const Tensor<T>& forward_step(const Tensor<T>& in, std::size_t t) override {
        if (train_) {
            if (tape.size() <= t) tape.resize(t + 1);
            tape[t] = in;
        }
        kernels::matmul_nt(in, W, out_);
        kernels::add_row_vector(out_, b);
        return out_;
    }

    Tensor<T> backward_step(const Tensor<T>& d_out, std::size_t t, bool want_below) override {
        require(t < tape.size() && tape[t].numel() > 0, Errc::missing_tape,
                "readout backward without tape");
        kernels::matmul_tn(d_out, tape[t], dW, /*accumulate=*/true);
        kernels::sum_rows_acc(d_out, db);
        if (!want_below) return {};
        Tensor<T> below;
        kernels::matmul(d_out, W, below);
        return below;
    }

    std::vector<NamedParam<T>> parameters() override {
        return {{"readout.W", &W, &dW}, {"readout.b", &b, &db}};
    }

    bool output_binary() const override { return false; }
    std::string describe() const override { return "readout(" + std::to_string(classes_) + ")"; }

    Tensor<T> W, b, dW, db;
    std::vector<Tensor<T>> tape;

private:
    std::size_t classes_, in_features_ = 0;
    int index_;
    bool train_ = false;
    Tensor<T> out_;
};

// ---- convolutional cell layers ------------------------------------------------
// Table-3 CNN rows: the input transform and (for RNN/LSTM) the recurrent
// transform are both 3x3 same-padding convolutions over the layer's own map.

template <typename T>
class ConvLifLayer final : public Layer<T> {
public:
    ConvLifLayer(std::size_t maps, const CellOptions& opt, int index) : maps_(maps), index_(index) {
        u_th_ = static_cast<T>(opt.u_th);
        leak_ = static_cast<T>(opt.leak);
        a_ = static_cast<T>(opt.grad_width);
        leakage_enabled_ = opt.leakage_enabled;
        reset_enabled_ = opt.reset_enabled;
    }

    std::vector<std::size_t> out_shape(const std::vector<std::size_t>& in) override {
        require(in.size() == 3, Errc::config, "conv cell requires a [C,H,W] input");
        ci_ = in[0];
        h_ = in[1];
        w_ = in[2];
        K = Tensor<T>({maps_, ci_, 3, 3});
        dK = Tensor<T>(K.shape);
        return {maps_, h_, w_};
    }

    void begin_sequence(std::size_t batch, bool train) override {
        batch_ = batch;
        train_ = train;
        u_ = Tensor<T>({batch, maps_, h_, w_});
        o_ = Tensor<T>({batch, maps_, h_, w_});
        tape_in.clear();
        tape_u.clear();
        tape_o.clear();
    }

    const Tensor<T>& forward_step(const Tensor<T>& in, std::size_t t) override {
        Tensor<T> z;
        kernels::conv3x3_batch(in, K, z);
        const T lam = leakage_enabled_ ? leak_ : static_cast<T>(1);
        for (std::size_t i = 0; i < u_.numel(); ++i) {
            const T keep = reset_enabled_ ? (static_cast<T>(1) - o_.data[i]) : static_cast<T>(1);
            u_.data[i] = lam * u_.data[i] * keep + z.data[i];
        }
        for (std::size_t i = 0; i < o_.numel(); ++i)
            o_.data[i] = (u_.data[i] >= u_th_) ? static_cast<T>(1) : T{};
        if (train_) {
            if (tape_in.size() <= t) {
                tape_in.resize(t + 1);
                tape_u.resize(t + 1);
                tape_o.resize(t + 1);
            }
            tape_in[t] = in;
            tape_u[t] = u_;
            tape_o[t] = o_;
        }
        return o_;
    }

    void begin_backward() override { carry_ = Tensor<T>(); }

    Tensor<T> backward_step(const Tensor<T>& d_out, std::size_t t, bool want_below) override {
        require(t < tape_u.size() && tape_u[t].numel() > 0, Errc::missing_tape,
                "conv-lif backward without tape");
        const T lam = leakage_enabled_ ? leak_ : static_cast<T>(1);
        Tensor<T> d_o = d_out;
        if (carry_.numel() && reset_enabled_)
            cells::hadamard_acc(d_o, carry_, tape_u[t], -lam);
        const Tensor<T> fp = cells::surrogate_grad(tape_u[t], u_th_, a_);
        Tensor<T> d_u(d_o.shape);
        for (std::size_t i = 0; i < d_u.numel(); ++i) d_u.data[i] = d_o.data[i] * fp.data[i];
        if (carry_.numel())
            for (std::size_t i = 0; i < d_u.numel(); ++i) {
                const T keep = reset_enabled_ ? (static_cast<T>(1) - tape_o[t].data[i]) : static_cast<T>(1);
                d_u.data[i] += lam * carry_.data[i] * keep;
            }
        kernels::conv3x3_kernel_grad_batch(d_u, tape_in[t], dK);
        carry_ = std::move(d_u);
        if (!want_below) return {};
        Tensor<T> below;
        kernels::conv3x3_input_grad_batch(carry_, K, below);
        return below;
    }

    std::vector<NamedParam<T>> parameters() override {
        return {{"L" + std::to_string(index_) + ".K", &K, &dK}};
    }

    bool output_binary() const override { return true; }
    std::string describe() const override { return std::to_string(maps_) + "C3(lif)"; }

    void set_leak(T leak) { leak_ = leak; }
    T leak() const { return leak_; }

    Tensor<T> K, dK;
    std::vector<Tensor<T>> tape_in, tape_u, tape_o;

private:
    std::size_t maps_, ci_ = 0, h_ = 0, w_ = 0, batch_ = 0;
    int index_;
    T u_th_, leak_, a_;
    bool leakage_enabled_, reset_enabled_, train_ = false;
    Tensor<T> u_, o_, carry_;
};

template <typename T>
class ConvRnnLayer final : public Layer<T> {
public:
    ConvRnnLayer(std::size_t maps, int index) : maps_(maps), index_(index) {}

    std::vector<std::size_t> out_shape(const std::vector<std::size_t>& in) override {
        require(in.size() == 3, Errc::config, "conv cell requires a [C,H,W] input");
        ci_ = in[0];
        h_ = in[1];
        w_ = in[2];
        K1 = Tensor<T>({maps_, ci_, 3, 3});
        K2 = Tensor<T>({maps_, maps_, 3, 3});
        b = Tensor<T>({maps_});
        dK1 = Tensor<T>(K1.shape);
        dK2 = Tensor<T>(K2.shape);
        db = Tensor<T>(b.shape);
        return {maps_, h_, w_};
    }

    void begin_sequence(std::size_t batch, bool train) override {
        batch_ = batch;
        train_ = train;
        hstate_ = Tensor<T>({batch, maps_, h_, w_});
        tape_in.clear();
        tape_h.clear();
        tape_h_prev.clear();
    }

    const Tensor<T>& forward_step(const Tensor<T>& in, std::size_t t) override {
        Tensor<T> z;
        kernels::conv3x3_batch(in, K1, z);
        if (t > 0) kernels::conv3x3_batch(hstate_, K2, z, /*accumulate=*/true);
        add_channel_bias(z);
        Tensor<T> h(z.shape);
        for (std::size_t i = 0; i < z.numel(); ++i) h.data[i] = std::tanh(z.data[i]);
        if (train_) {
            if (tape_in.size() <= t) {
                tape_in.resize(t + 1);
                tape_h.resize(t + 1);
                tape_h_prev.resize(t + 1);
            }
            tape_in[t] = in;
            tape_h_prev[t] = hstate_;
            tape_h[t] = h;
        }
        hstate_ = std::move(h);
        return hstate_;
    }

    void begin_backward() override { carry_ = Tensor<T>(); }

    Tensor<T> backward_step(const Tensor<T>& d_out, std::size_t t, bool want_below) override {
        require(t < tape_h.size() && tape_h[t].numel() > 0, Errc::missing_tape,
                "conv-rnn backward without tape");
        Tensor<T> dz(tape_h[t].shape);
        for (std::size_t i = 0; i < dz.numel(); ++i) {
            T dh = d_out.data[i];
            if (carry_.numel()) dh += carry_.data[i];
            dz.data[i] = dh * (static_cast<T>(1) - tape_h[t].data[i] * tape_h[t].data[i]);
        }
        kernels::conv3x3_kernel_grad_batch(dz, tape_in[t], dK1);
        if (t > 0) kernels::conv3x3_kernel_grad_batch(dz, tape_h_prev[t], dK2);
        acc_channel_bias_grad(dz);
        carry_ = (t > 0) ? input_grad(dz, K2) : Tensor<T>();
        if (!want_below) return {};
        return input_grad(dz, K1);
    }

    std::vector<NamedParam<T>> parameters() override {
        std::string p = "L" + std::to_string(index_) + ".";
        return {{p + "K1", &K1, &dK1}, {p + "K2", &K2, &dK2}, {p + "b", &b, &db}};
    }

    bool output_binary() const override { return false; }
    std::string describe() const override { return std::to_string(maps_) + "C3(rnn)"; }

    Tensor<T> K1, K2, b, dK1, dK2, db;
    std::vector<Tensor<T>> tape_in, tape_h, tape_h_prev;

private:
    Tensor<T> input_grad(const Tensor<T>& dz, const Tensor<T>& K) {
        Tensor<T> out;
        kernels::conv3x3_input_grad_batch(dz, K, out);
        return out;
    }

    void add_channel_bias(Tensor<T>& z) {
        const std::size_t plane = h_ * w_;
        for (std::size_t bi = 0; bi < batch_; ++bi)
            for (std::size_t c = 0; c < maps_; ++c) {
                T* p = z.ptr() + (bi * maps_ + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) p[i] += b.data[c];
            }
    }

    void acc_channel_bias_grad(const Tensor<T>& dz) {
        const std::size_t plane = h_ * w_;
        for (std::size_t bi = 0; bi < batch_; ++bi)
            for (std::size_t c = 0; c < maps_; ++c) {
                const T* p = dz.ptr() + (bi * maps_ + c) * plane;
                T acc{};
                for (std::size_t i = 0; i < plane; ++i) acc += p[i];
                db.data[c] += acc;
            }
    }

    std::size_t maps_, ci_ = 0, h_ = 0, w_ = 0, batch_ = 0;
    int index_;
    bool train_ = false;
    Tensor<T> hstate_, carry_;
};

template <typename T>
class ConvLstmLayer final : public Layer<T> {
public:
    ConvLstmLayer(std::size_t maps, int index) : maps_(maps), index_(index) {}

    std::vector<std::size_t> out_shape(const std::vector<std::size_t>& in) override {
        require(in.size() == 3, Errc::config, "conv cell requires a [C,H,W] input");
        ci_ = in[0];
        h_ = in[1];
        w_ = in[2];
        for (int g = 0; g < 4; ++g) {
            K1[g] = Tensor<T>({maps_, ci_, 3, 3});
            K2[g] = Tensor<T>({maps_, maps_, 3, 3});
            b[g] = Tensor<T>({maps_});
            dK1[g] = Tensor<T>(K1[g].shape);
            dK2[g] = Tensor<T>(K2[g].shape);
            db[g] = Tensor<T>(b[g].shape);
        }
        return {maps_, h_, w_};
    }

    void begin_sequence(std::size_t batch, bool train) override {
        batch_ = batch;
        train_ = train;
        hstate_ = Tensor<T>({batch, maps_, h_, w_});
        cstate_ = Tensor<T>({batch, maps_, h_, w_});
        tape_in.clear();
        tape_gate.clear();
        tape_tanh_c.clear();
        tape_c_prev.clear();
        tape_h_prev.clear();
    }

    const Tensor<T>& forward_step(const Tensor<T>& in, std::size_t t) override {
        std::array<Tensor<T>, 4> act;
        for (int g = 0; g < 4; ++g) {
            Tensor<T> z;
            kernels::conv3x3_batch(in, K1[g], z);
            if (t > 0) kernels::conv3x3_batch(hstate_, K2[g], z, /*accumulate=*/true);
            add_channel_bias(z, b[g]);
            act[g] = Tensor<T>(z.shape);
            if (g == cells::kCandidate)
                for (std::size_t i = 0; i < z.numel(); ++i) act[g].data[i] = std::tanh(z.data[i]);
            else
                for (std::size_t i = 0; i < z.numel(); ++i)
                    act[g].data[i] = static_cast<T>(1) / (static_cast<T>(1) + std::exp(-z.data[i]));
        }
        Tensor<T> c_new(cstate_.shape), tanh_c(cstate_.shape), h_new(cstate_.shape);
        for (std::size_t i = 0; i < c_new.numel(); ++i) {
            c_new.data[i] = cstate_.data[i] * act[cells::kForget].data[i] +
                            act[cells::kCandidate].data[i] * act[cells::kInput].data[i];
            tanh_c.data[i] = std::tanh(c_new.data[i]);
            h_new.data[i] = tanh_c.data[i] * act[cells::kOutput].data[i];
        }
        if (train_) {
            if (tape_in.size() <= t) {
                tape_in.resize(t + 1);
                tape_gate.resize(t + 1);
                tape_tanh_c.resize(t + 1);
                tape_c_prev.resize(t + 1);
                tape_h_prev.resize(t + 1);
            }
            tape_in[t] = in;
            tape_gate[t] = act;
            tape_c_prev[t] = cstate_;
            tape_h_prev[t] = hstate_;
            tape_tanh_c[t] = tanh_c;
        }
        cstate_ = std::move(c_new);
        hstate_ = std::move(h_new);
        return hstate_;
    }

    void begin_backward() override {
        h_carry_ = Tensor<T>();
        c_carry_ = Tensor<T>();
    }

    Tensor<T> backward_step(const Tensor<T>& d_out, std::size_t t, bool want_below) override {
        require(t < tape_tanh_c.size() && tape_tanh_c[t].numel() > 0, Errc::missing_tape,
                "conv-lstm backward without tape");
        const std::size_t n = tape_tanh_c[t].numel();
        Tensor<T> dh(tape_tanh_c[t].shape);
        for (std::size_t i = 0; i < n; ++i) {
            dh.data[i] = d_out.data[i];
            if (h_carry_.numel()) dh.data[i] += h_carry_.data[i];
        }
        Tensor<T> dc(tape_tanh_c[t].shape);
        for (std::size_t i = 0; i < n; ++i) {
            const T th = tape_tanh_c[t].data[i];
            dc.data[i] = dh.data[i] * tape_gate[t][cells::kOutput].data[i] * (static_cast<T>(1) - th * th);
            if (c_carry_.numel()) dc.data[i] += c_carry_.data[i];
        }
        std::array<Tensor<T>, 4> dz;
        for (int g = 0; g < 4; ++g) dz[g] = Tensor<T>(tape_tanh_c[t].shape);
        for (std::size_t i = 0; i < n; ++i) {
            const T f = tape_gate[t][cells::kForget].data[i];
            const T ig = tape_gate[t][cells::kInput].data[i];
            const T og = tape_gate[t][cells::kOutput].data[i];
            const T gg = tape_gate[t][cells::kCandidate].data[i];
            dz[cells::kForget].data[i] = dc.data[i] * tape_c_prev[t].data[i] * f * (static_cast<T>(1) - f);
            dz[cells::kInput].data[i] = dc.data[i] * gg * ig * (static_cast<T>(1) - ig);
            dz[cells::kOutput].data[i] = dh.data[i] * tape_tanh_c[t].data[i] * og * (static_cast<T>(1) - og);
            dz[cells::kCandidate].data[i] = dc.data[i] * ig * (static_cast<T>(1) - gg * gg);
        }

        Tensor<T> below;
        if (want_below) below = Tensor<T>({batch_, ci_, h_, w_});
        Tensor<T> h_carry_new;
        if (t > 0) h_carry_new = Tensor<T>(tape_tanh_c[t].shape);
        for (int g = 0; g < 4; ++g) {
            kernels::conv3x3_kernel_grad_batch(dz[g], tape_in[t], dK1[g]);
            if (t > 0) kernels::conv3x3_kernel_grad_batch(dz[g], tape_h_prev[t], dK2[g]);
            acc_channel_bias_grad(dz[g], db[g]);
            if (want_below) kernels::conv3x3_input_grad_batch(dz[g], K1[g], below, /*accumulate=*/true);
            if (t > 0) kernels::conv3x3_input_grad_batch(dz[g], K2[g], h_carry_new, /*accumulate=*/true);
        }
        h_carry_ = std::move(h_carry_new);
        if (t > 0) {
            c_carry_ = Tensor<T>(tape_tanh_c[t].shape);
            for (std::size_t i = 0; i < n; ++i)
                c_carry_.data[i] = dc.data[i] * tape_gate[t][cells::kForget].data[i];
        } else {
            c_carry_ = Tensor<T>();
        }
        return below;
    }

    std::vector<NamedParam<T>> parameters() override {
        std::string p = "L" + std::to_string(index_) + ".";
        std::vector<NamedParam<T>> v;
        for (int g = 0; g < 4; ++g) {
            const std::string gn = cells::kGateNames[g];
            v.push_back({p + "K" + gn + "1", &K1[g], &dK1[g]});
            v.push_back({p + "K" + gn + "2", &K2[g], &dK2[g]});
            v.push_back({p + "b" + gn, &b[g], &db[g]});
        }
        return v;
    }

    bool output_binary() const override { return false; }
    std::string describe() const override { return std::to_string(maps_) + "C3(lstm)"; }

    std::array<Tensor<T>, 4> K1, K2, b, dK1, dK2, db;
    std::vector<Tensor<T>> tape_in, tape_tanh_c, tape_c_prev, tape_h_prev;
    std::vector<std::array<Tensor<T>, 4>> tape_gate;

private:
    void add_channel_bias(Tensor<T>& z, const Tensor<T>& bias) {
        const std::size_t plane = h_ * w_;
        for (std::size_t bi = 0; bi < batch_; ++bi)
            for (std::size_t c = 0; c < maps_; ++c) {
                T* p = z.ptr() + (bi * maps_ + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) p[i] += bias.data[c];
            }
    }

    void acc_channel_bias_grad(const Tensor<T>& dz, Tensor<T>& dbias) {
        const std::size_t plane = h_ * w_;
        for (std::size_t bi = 0; bi < batch_; ++bi)
            for (std::size_t c = 0; c < maps_; ++c) {
                const T* p = dz.ptr() + (bi * maps_ + c) * plane;
                T acc{};
                for (std::size_t i = 0; i < plane; ++i) acc += p[i];
                dbias.data[c] += acc;
            }
    }

    std::size_t maps_, ci_ = 0, h_ = 0, w_ = 0, batch_ = 0;
    int index_;
    bool train_ = false;
    Tensor<T> hstate_, cstate_, h_carry_, c_carry_;
};

// ---- the network -----------------------------------------------------------------

template <typename T>
class Network {
public:
    NetworkConfig config;
    std::vector<std::unique_ptr<Layer<T>>> layers;
    std::vector<std::vector<std::size_t>> shape_trace;  // per-sample shapes incl. input

    std::size_t n_outputs() const { return config.n_classes; }

    std::vector<NamedParam<T>> parameters() {
        std::vector<NamedParam<T>> all;
        for (auto& l : layers)
            for (auto& p : l->parameters()) all.push_back(p);
        return all;
    }

    void zero_grads() {
        for (auto& l : layers) l->zero_grads();
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (auto& p : parameters()) n += p.value->numel();
        return n;
    }

    void set_leak(double leak) {
        for (auto& l : layers) {
            if (auto* fc = dynamic_cast<FcLifLayer<T>*>(l.get())) fc->params.leak = static_cast<T>(leak);
            if (auto* cv = dynamic_cast<ConvLifLayer<T>*>(l.get())) cv->set_leak(static_cast<T>(leak));
        }
    }

    // Forward over the whole sequence. Outputs: per timestep [B, classes]
    // (spikes of the top LIF layer for SNNs, readout vectors otherwise).
    std::vector<Tensor<T>> forward(const std::vector<const io::SliceSequence*>& batch, bool train) {
        require(!batch.empty(), Errc::config, "forward: empty batch");
        const std::size_t B = batch.size();
        const std::size_t steps = batch[0]->T();
        for (const auto* s : batch) {
            require(s->T() == steps, Errc::shape_mismatch, "forward: ragged batch T");
            require(s->channels() == config.input.channels && s->height() == config.input.height &&
                        s->width() == config.input.width,
                    Errc::shape_mismatch, "forward: input geometry mismatch");
        }
        for (auto& l : layers) l->begin_sequence(B, train);

        const std::size_t plane = config.input.channels * config.input.height * config.input.width;
        std::vector<Tensor<T>> outputs;
        outputs.reserve(steps);
        Tensor<T> x({B, config.input.channels, config.input.height, config.input.width});
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t b = 0; b < B; ++b) {
                const std::uint8_t* src = batch[b]->data.ptr() + t * plane;
                T* dst = x.ptr() + b * plane;
                for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>(src[i]);
            }
            const Tensor<T>* cur = &x;
            for (auto& l : layers) cur = &l->forward_step(*cur, t);
            debug_check_finite(*cur, "network outputs");
            outputs.push_back(*cur);
        }
        return outputs;
    }

    // BPTT: iterate t = T..1, layer = top..bottom, threading the temporal
    // carries inside each layer. loss_grads[t] is dL/d(output at t). Nothing
    // below the lowest parametered layer consumes a gradient, so propagation
    // stops there.
    void backward(const std::vector<Tensor<T>>& loss_grads) {
        require(!loss_grads.empty(), Errc::missing_tape, "backward: no loss gradients");
        std::size_t lowest_param = layers.size();
        for (std::size_t li = 0; li < layers.size(); ++li)
            if (!layers[li]->parameters().empty()) {
                lowest_param = li;
                break;
            }
        for (auto& l : layers) l->begin_backward();
        for (std::size_t ti = loss_grads.size(); ti-- > 0;) {
            Tensor<T> delta = loss_grads[ti];
            for (std::size_t li = layers.size(); li-- > 0;) {
                delta = layers[li]->backward_step(delta, ti, /*want_below=*/li > lowest_param);
                if (li == lowest_param) break;
            }
        }
    }
};

template <typename T>
void init_params(Network<T>& net, std::uint64_t seed);

// Instantiates the layer stack for a config and initializes parameters
// uniformly in [-sqrt(1/fan_in), +sqrt(1/fan_in)] per tensor.
template <typename T>
Network<T> build(const NetworkConfig& config_in, std::uint64_t seed) {
    NetworkConfig config = config_in;
    if (config.stack.empty()) config.parse_structure();
    config.validate();

    Network<T> net;
    net.config = config;

    std::vector<std::size_t> shape = {config.input.channels, config.input.height, config.input.width};
    net.shape_trace.push_back(shape);
    bool binary = true;  // raw slices are binary
    int index = 0;

    auto add_cell_fc = [&](std::size_t width) {
        switch (config.model_kind) {
            case ModelKind::snn:
                net.layers.push_back(
                    std::make_unique<FcLifLayer<T>>(width, config.cell, index, binary));
                break;
            case ModelKind::rnn:
                net.layers.push_back(std::make_unique<FcRnnLayer<T>>(width, binary, index));
                break;
            case ModelKind::lstm:
                net.layers.push_back(std::make_unique<FcLstmLayer<T>>(width, binary, index));
                break;
        }
    };
    auto add_cell_conv = [&](std::size_t maps) {
        switch (config.model_kind) {
            case ModelKind::snn:
                net.layers.push_back(std::make_unique<ConvLifLayer<T>>(maps, config.cell, index));
                break;
            case ModelKind::rnn:
                net.layers.push_back(std::make_unique<ConvRnnLayer<T>>(maps, index));
                break;
            case ModelKind::lstm:
                net.layers.push_back(std::make_unique<ConvLstmLayer<T>>(maps, index));
                break;
        }
    };

    for (const auto& spec : config.stack) {
        switch (spec.kind) {
            case LayerSpec::Kind::max_pool:
                net.layers.push_back(std::make_unique<PoolLayer<T>>(true, spec.arg, binary));
                break;
            case LayerSpec::Kind::avg_pool:
                net.layers.push_back(std::make_unique<PoolLayer<T>>(false, spec.arg, binary));
                break;
            case LayerSpec::Kind::fc_cell:
                add_cell_fc(spec.arg);
                break;
            case LayerSpec::Kind::conv_cell:
                add_cell_conv(spec.arg);
                break;
        }
        shape = net.layers.back()->out_shape(shape);
        net.shape_trace.push_back(shape);
        binary = net.layers.back()->output_binary();
        ++index;
    }

    // final class layer: a spiking cell for SNNs, a linear readout otherwise
    if (config.model_kind == ModelKind::snn) {
        net.layers.push_back(
            std::make_unique<FcLifLayer<T>>(config.n_classes, config.cell, index, binary));
    } else {
        require(shape.size() == 1, Errc::config, "readout requires a flat feature vector");
        net.layers.push_back(std::make_unique<ReadoutLayer<T>>(config.n_classes, index));
    }
    shape = net.layers.back()->out_shape(shape);
    net.shape_trace.push_back(shape);

    init_params(net, seed);
    return net;
}

template <typename T>
void init_params(Network<T>& net, std::uint64_t seed) {
    Rng root(seed);
    Rng weights = root.split(0x57454947);  // one substream per concern
    for (auto& l : net.layers) {
        auto ps = l->parameters();
        // fan_in per tensor: trailing dims (input width; 9*Ci for conv kernels);
        // biases borrow the fan_in of the layer's first weight tensor
        std::size_t layer_fan_in = 0;
        for (auto& p : ps)
            if (p.value->ndim() >= 2) {
                layer_fan_in = p.value->numel() / p.value->shape[0];
                break;
            }
        for (auto& p : ps) {
            const std::size_t fan_in = p.value->ndim() >= 2
                                           ? p.value->numel() / p.value->shape[0]
                                           : (layer_fan_in ? layer_fan_in : p.value->numel());
            const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
            fill_uniform(*p.value, weights, -bound, bound);
        }
    }
}

}  // namespace nvsnn::net

