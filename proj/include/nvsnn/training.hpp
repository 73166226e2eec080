#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>

#include "nvsnn/config.hpp"
#include "nvsnn/dataset.hpp"
#include "nvsnn/network.hpp"

namespace nvsnn::train {

// Scalar batch-mean loss and its per-timestep output gradients.
template <typename T>
struct LossResult {
    double loss = 0.0;
    std::vector<Tensor<T>> grads;  // one [B,C] tensor per timestep
};

// L = || Y - (1/T) sum_t o^t ||^2, batch mean; do^t = -(2/(T*B)) (Y - obar) for every t.
template <typename T>
LossResult<T> loss_snn_rate_mse(const std::vector<Tensor<T>>& outputs, const Tensor<T>& Y) {
    const std::size_t steps = outputs.size(), B = Y.rows(), C = Y.cols();
    Tensor<T> mean({B, C});
    for (const auto& o : outputs)
        for (std::size_t i = 0; i < mean.numel(); ++i) mean.data[i] += o.data[i];
    const T invT = static_cast<T>(1.0 / static_cast<double>(steps));
    for (auto& v : mean.data) v *= invT;

    LossResult<T> res;
    Tensor<T> g({B, C});
    for (std::size_t i = 0; i < g.numel(); ++i) {
        const T diff = Y.data[i] - mean.data[i];
        res.loss += static_cast<double>(diff) * static_cast<double>(diff);
        g.data[i] = static_cast<T>(-2.0 / (static_cast<double>(steps) * static_cast<double>(B))) * diff;
    }
    res.loss /= static_cast<double>(B);
    res.grads.assign(steps, g);
    return res;
}

// L = || Y - r^T ||^2, batch mean; gradient nonzero only at the last step.
template <typename T>
LossResult<T> loss_last_step(const std::vector<Tensor<T>>& outputs, const Tensor<T>& Y) {
    const std::size_t steps = outputs.size(), B = Y.rows(), C = Y.cols();
    LossResult<T> res;
    res.grads.assign(steps, Tensor<T>({B, C}));
    const Tensor<T>& last = outputs.back();
    for (std::size_t i = 0; i < Y.numel(); ++i) {
        const T diff = Y.data[i] - last.data[i];
        res.loss += static_cast<double>(diff) * static_cast<double>(diff);
        res.grads.back().data[i] = static_cast<T>(-2.0 / static_cast<double>(B)) * diff;
    }
    res.loss /= static_cast<double>(B);
    return res;
}

// L = (1/T) sum_t || Y - r^t ||^2, batch mean.
template <typename T>
LossResult<T> loss_per_step(const std::vector<Tensor<T>>& outputs, const Tensor<T>& Y) {
    const std::size_t steps = outputs.size(), B = Y.rows(), C = Y.cols();
    LossResult<T> res;
    res.grads.assign(steps, Tensor<T>({B, C}));
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < Y.numel(); ++i) {
            const T diff = Y.data[i] - outputs[t].data[i];
            res.loss += static_cast<double>(diff) * static_cast<double>(diff);
            res.grads[t].data[i] =
                static_cast<T>(-2.0 / (static_cast<double>(steps) * static_cast<double>(B))) * diff;
        }
    }
    res.loss /= static_cast<double>(steps) * static_cast<double>(B);
    return res;
}

// L = || Y - (1/T) sum_t r^t ||^2, batch mean (rate-coding-inspired).
template <typename T>
LossResult<T> loss_rate_inspired(const std::vector<Tensor<T>>& outputs, const Tensor<T>& Y) {
    return loss_snn_rate_mse(outputs, Y);  // same functional form on the readouts
}

template <typename T>
LossResult<T> compute_loss(net::LossKind kind, const std::vector<Tensor<T>>& outputs,
                           const Tensor<T>& Y) {
    switch (kind) {
        case net::LossKind::snn_rate_mse: return loss_snn_rate_mse(outputs, Y);
        case net::LossKind::last_step: return loss_last_step(outputs, Y);
        case net::LossKind::per_step: return loss_per_step(outputs, Y);
        case net::LossKind::rate_inspired: return loss_rate_inspired(outputs, Y);
    }
    fail(Errc::config, "unknown loss kind");
}

// Score aggregate used for classification: mean spikes for the rate-coded SNN,
// last readout for the mainstream loss, mean readout otherwise.
template <typename T>
Tensor<T> aggregate_scores(net::LossKind kind, const std::vector<Tensor<T>>& outputs) {
    if (kind == net::LossKind::last_step) return outputs.back();
    Tensor<T> mean(outputs.front().shape);
    for (const auto& o : outputs)
        for (std::size_t i = 0; i < mean.numel(); ++i) mean.data[i] += o.data[i];
    const T invT = static_cast<T>(1.0 / static_cast<double>(outputs.size()));
    for (auto& v : mean.data) v *= invT;
    return mean;
}

// argmax per row; ties go to the lowest class index.
template <typename T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& scores) {
    std::vector<std::size_t> out(scores.rows());
    for (std::size_t b = 0; b < scores.rows(); ++b) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < scores.cols(); ++c)
            if (scores.at(b, c) > scores.at(b, best)) best = c;
        out[b] = best;
    }
    return out;
}

// ---- Adam ---------------------------------------------------------------------

template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m, v;
    std::size_t step = 0;
};

template <typename T>
AdamState<T> adam_init(const std::vector<net::NamedParam<T>>& params) {
    AdamState<T> s;
    for (const auto& p : params) {
        s.m.emplace_back(p.value->shape);
        s.v.emplace_back(p.value->shape);
    }
    return s;
}

// One bias-corrected update of a single tensor.
template <typename T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v,
                 std::size_t step_index, const TrainConfig& cfg) {
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_index));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_index));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double g = static_cast<double>(grad.data[i]);
        const double mi = b1 * static_cast<double>(m.data[i]) + (1.0 - b1) * g;
        const double vi = b2 * static_cast<double>(v.data[i]) + (1.0 - b2) * g * g;
        m.data[i] = static_cast<T>(mi);
        v.data[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        param.data[i] -= static_cast<T>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
}

template <typename T>
void adam_step(const std::vector<net::NamedParam<T>>& params, AdamState<T>& state,
               const TrainConfig& cfg) {
    ++state.step;
    for (std::size_t i = 0; i < params.size(); ++i)
        adam_update(*params[i].value, *params[i].grad, state.m[i], state.v[i], state.step, cfg);
}

// ---- train / evaluate -----------------------------------------------------------

template <typename T>
Tensor<T> one_hot(const std::vector<const io::SliceSequence*>& batch, std::size_t classes) {
    Tensor<T> Y({batch.size(), classes});
    for (std::size_t b = 0; b < batch.size(); ++b) {
        require(batch[b]->label >= 0 && static_cast<std::size_t>(batch[b]->label) < classes,
                Errc::label_file, "sample label outside class range");
        Y.at(b, static_cast<std::size_t>(batch[b]->label)) = static_cast<T>(1);
    }
    return Y;
}

struct EvalResult {
    double accuracy = 0.0;
    double loss = 0.0;
};

template <typename T>
EvalResult evaluate(net::Network<T>& net, const data::SliceDataset& data, std::size_t batch_size) {
    require(!data.empty(), Errc::missing_file, "evaluate: empty dataset");
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (std::size_t base = 0; base < data.size(); base += batch_size) {
        const std::size_t n = std::min(batch_size, data.size() - base);
        std::vector<const io::SliceSequence*> batch(n);
        for (std::size_t i = 0; i < n; ++i) batch[i] = &data.samples[base + i];
        const auto outputs = net.forward(batch, /*train=*/false);
        const Tensor<T> Y = one_hot<T>(batch, net.config.n_classes);
        loss_sum += compute_loss(net.config.loss_kind, outputs, Y).loss * static_cast<double>(n);
        const auto pred = argmax_rows(aggregate_scores(net.config.loss_kind, outputs));
        for (std::size_t i = 0; i < n; ++i)
            if (pred[i] == static_cast<std::size_t>(batch[i]->label)) ++correct;
    }
    EvalResult r;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    r.loss = loss_sum / static_cast<double>(data.size());
    return r;
}

// Evaluate a (possibly re-collapsed) event dataset at an arbitrary temporal
// resolution; applies the adaptive-leakage rule when the config asks for it.
template <typename T>
EvalResult evaluate_at(net::Network<T>& net, const data::EventDataset& events, std::uint32_t dt_us,
                       std::uint32_t T_eval, std::size_t batch_size) {
    const data::SliceDataset slices = data::collapse_all(events, dt_us, T_eval);
    const double train_leak = net.config.cell.leak;
    if (net.config.cell.adaptive_leakage) {
        // tau pinned by the training resolution: leak_eval = leak_train^(dt_eval/dt_train)
        const double ratio = static_cast<double>(dt_us) / static_cast<double>(net.config.dt_us);
        net.set_leak(std::pow(train_leak, ratio));
    }
    EvalResult r = evaluate(net, slices, batch_size);
    if (net.config.cell.adaptive_leakage) net.set_leak(train_leak);
    return r;
}

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0, train_acc = 0.0;
    double test_loss = 0.0, test_acc = 0.0;
    double seconds = 0.0;
};

struct RunLog {
    std::vector<EpochLog> epochs;
    double best_test_acc = 0.0;
    std::size_t best_epoch = 0;
    double final_test_acc = 0.0;

    std::string to_csv() const {
        std::string s = "epoch,split,loss,accuracy,wall_seconds\n";
        char buf[160];
        for (const auto& e : epochs) {
            std::snprintf(buf, sizeof buf, "%zu,train,%.6f,%.6f,%.3f\n", e.epoch, e.train_loss,
                          e.train_acc, e.seconds);
            s += buf;
            std::snprintf(buf, sizeof buf, "%zu,test,%.6f,%.6f,%.3f\n", e.epoch, e.test_loss,
                          e.test_acc, e.seconds);
            s += buf;
        }
        return s;
    }
};

// Seeded epoch shuffle (seed + epoch), minibatch SGD with Adam, per-epoch
// train/test metrics. epoch_cb (when set) runs after every epoch.
template <typename T>
RunLog train_loop(net::Network<T>& net, const data::SliceDataset& train_data,
                  const data::SliceDataset& test_data, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& epoch_cb = nullptr) {
    require(!train_data.empty(), Errc::missing_file, "train: empty dataset");
    auto params = net.parameters();
    AdamState<T> adam = adam_init(params);
    RunLog log;

    std::vector<std::size_t> order(train_data.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.max_epoch; ++epoch) {
        const auto tic = std::chrono::steady_clock::now();
        Rng shuffle_rng(cfg.seed + epoch);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t base = 0; base < order.size(); base += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - base);
            std::vector<const io::SliceSequence*> batch(n);
            for (std::size_t i = 0; i < n; ++i) batch[i] = &train_data.samples[order[base + i]];
            const Tensor<T> Y = one_hot<T>(batch, net.config.n_classes);

            net.zero_grads();
            const auto outputs = net.forward(batch, /*train=*/true);
            LossResult<T> loss = compute_loss(net.config.loss_kind, outputs, Y);
            net.backward(loss.grads);
            adam_step(params, adam, cfg);

            loss_sum += loss.loss * static_cast<double>(n);
            const auto pred = argmax_rows(aggregate_scores(net.config.loss_kind, outputs));
            for (std::size_t i = 0; i < n; ++i)
                if (pred[i] == static_cast<std::size_t>(batch[i]->label)) ++correct;
        }

        EpochLog e;
        e.epoch = epoch;
        e.train_loss = loss_sum / static_cast<double>(train_data.size());
        e.train_acc = static_cast<double>(correct) / static_cast<double>(train_data.size());
        if (!test_data.empty()) {
            const EvalResult r = evaluate(net, test_data, cfg.batch_size);
            e.test_loss = r.loss;
            e.test_acc = r.accuracy;
        }
        e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
        log.epochs.push_back(e);
        if (e.test_acc >= log.best_test_acc) {
            log.best_test_acc = e.test_acc;
            log.best_epoch = epoch;
        }
        log.final_test_acc = e.test_acc;
        if (epoch_cb) epoch_cb(e);
    }
    return log;
}

}  // namespace nvsnn::train
