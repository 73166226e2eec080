#pragma once

#include <functional>
#include <memory>

#include "nvsnn/cells.hpp"

// Reverse-accumulation oracle over the unrolled spiking-network graph, with
// the rectangular surrogate derivative installed at the firing nodes. This is
// a separate tape-based autodiff, independent of the closed-form backward
// recurrences it is used to verify.

namespace nvsnn::testing {

class GraphTape;

struct GraphNode {
    Tensor<double> value;
    Tensor<double> grad;
    std::function<void()> pull;  // propagate this->grad into the inputs

    explicit GraphNode(Tensor<double> v) : value(std::move(v)), grad(value.shape) {}
};

using NodeP = std::shared_ptr<GraphNode>;

class GraphTape {
public:
    NodeP leaf(Tensor<double> v) {
        auto n = std::make_shared<GraphNode>(std::move(v));
        order_.push_back(n);
        return n;
    }

    // y = W x (column-vector semantics; W is [out, in], x is [in])
    NodeP matvec(const NodeP& W, const NodeP& x) {
        Tensor<double> y({W->value.rows()});
        for (std::size_t j = 0; j < W->value.rows(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < W->value.cols(); ++k)
                acc += W->value.at(j, k) * x->value.data[k];
            y.data[j] = acc;
        }
        auto n = std::make_shared<GraphNode>(std::move(y));
        n->pull = [n, W, x] {
            for (std::size_t j = 0; j < W->value.rows(); ++j)
                for (std::size_t k = 0; k < W->value.cols(); ++k) {
                    W->grad.at(j, k) += n->grad.data[j] * x->value.data[k];
                    x->grad.data[k] += W->value.at(j, k) * n->grad.data[j];
                }
        };
        order_.push_back(n);
        return n;
    }

    NodeP add(const NodeP& a, const NodeP& b) {
        Tensor<double> y(a->value.shape);
        for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = a->value.data[i] + b->value.data[i];
        auto n = std::make_shared<GraphNode>(std::move(y));
        n->pull = [n, a, b] {
            for (std::size_t i = 0; i < n->grad.numel(); ++i) {
                a->grad.data[i] += n->grad.data[i];
                b->grad.data[i] += n->grad.data[i];
            }
        };
        order_.push_back(n);
        return n;
    }

    NodeP hadamard(const NodeP& a, const NodeP& b) {
        Tensor<double> y(a->value.shape);
        for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = a->value.data[i] * b->value.data[i];
        auto n = std::make_shared<GraphNode>(std::move(y));
        n->pull = [n, a, b] {
            for (std::size_t i = 0; i < n->grad.numel(); ++i) {
                a->grad.data[i] += n->grad.data[i] * b->value.data[i];
                b->grad.data[i] += n->grad.data[i] * a->value.data[i];
            }
        };
        order_.push_back(n);
        return n;
    }

    NodeP scale(const NodeP& a, double c) {
        Tensor<double> y(a->value.shape);
        for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = c * a->value.data[i];
        auto n = std::make_shared<GraphNode>(std::move(y));
        n->pull = [n, a, c] {
            for (std::size_t i = 0; i < n->grad.numel(); ++i) a->grad.data[i] += c * n->grad.data[i];
        };
        order_.push_back(n);
        return n;
    }

    NodeP one_minus(const NodeP& a) {
        Tensor<double> y(a->value.shape);
        for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = 1.0 - a->value.data[i];
        auto n = std::make_shared<GraphNode>(std::move(y));
        n->pull = [n, a] {
            for (std::size_t i = 0; i < n->grad.numel(); ++i) a->grad.data[i] -= n->grad.data[i];
        };
        order_.push_back(n);
        return n;
    }

    // firing node: value = step(u - u_th), derivative = rectangular surrogate
    NodeP spike(const NodeP& u, double u_th, double width) {
        Tensor<double> y(u->value.shape);
        for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = u->value.data[i] >= u_th ? 1.0 : 0.0;
        auto n = std::make_shared<GraphNode>(std::move(y));
        n->pull = [n, u, u_th, width] {
            for (std::size_t i = 0; i < n->grad.numel(); ++i) {
                const double d = u->value.data[i] - u_th;
                const double fp = (d <= width / 2 && d >= -width / 2) ? 1.0 / width : 0.0;
                u->grad.data[i] += n->grad.data[i] * fp;
            }
        };
        order_.push_back(n);
        return n;
    }

    // L = || Y - (1/T) sum_t o^t ||^2 ; seeds the output gradients directly
    double rate_mse_backward(const std::vector<NodeP>& outputs, const Tensor<double>& Y) {
        const double T = static_cast<double>(outputs.size());
        Tensor<double> mean(Y.shape);
        for (const auto& o : outputs)
            for (std::size_t i = 0; i < mean.numel(); ++i) mean.data[i] += o->value.data[i] / T;
        double loss = 0.0;
        for (std::size_t i = 0; i < Y.numel(); ++i) {
            const double diff = Y.data[i] - mean.data[i];
            loss += diff * diff;
            for (const auto& o : outputs) o->grad.data[i] += -(2.0 / T) * diff;
        }
        reverse();
        return loss;
    }

    // seed arbitrary output gradients, then reverse-accumulate
    void backward_from(const std::vector<std::pair<NodeP, Tensor<double>>>& seeds) {
        for (const auto& [node, g] : seeds)
            for (std::size_t i = 0; i < g.numel(); ++i) node->grad.data[i] += g.data[i];
        reverse();
    }

private:
    void reverse() {
        for (std::size_t i = order_.size(); i-- > 0;)
            if (order_[i]->pull) order_[i]->pull();
    }

    std::vector<NodeP> order_;
};

// Unrolls the iterative spiking dynamics (with the ablation-flag semantics of
// the production cell) over T steps and L layers; returns the oracle's
// parameter gradients after reverse accumulation of the rate-coded MSE loss.
struct LifOracleResult {
    double loss = 0.0;
    std::vector<Tensor<double>> dW;
    std::vector<Tensor<double>> dW_rec;  // empty tensors where absent
};

inline LifOracleResult lif_graph_oracle(const std::vector<cells::LifParams<double>>& layers,
                                        const std::vector<Tensor<double>>& inputs,  // per t, [in]
                                        const Tensor<double>& Y) {
    GraphTape tape;
    const std::size_t L = layers.size(), T = inputs.size();

    std::vector<NodeP> W(L), W_rec(L);
    for (std::size_t n = 0; n < L; ++n) {
        W[n] = tape.leaf(layers[n].W);
        if (layers[n].W_rec) W_rec[n] = tape.leaf(*layers[n].W_rec);
    }

    std::vector<NodeP> u_prev(L), o_prev(L);
    for (std::size_t n = 0; n < L; ++n) {
        u_prev[n] = tape.leaf(Tensor<double>({layers[n].W.rows()}));
        o_prev[n] = tape.leaf(Tensor<double>({layers[n].W.rows()}));
    }

    std::vector<NodeP> outputs;
    for (std::size_t t = 0; t < T; ++t) {
        NodeP below = tape.leaf(inputs[t]);
        for (std::size_t n = 0; n < L; ++n) {
            const double lam = layers[n].effective_leak();
            NodeP carried = layers[n].reset_enabled
                                ? tape.hadamard(u_prev[n], tape.one_minus(o_prev[n]))
                                : u_prev[n];
            NodeP u = tape.add(tape.scale(carried, lam), tape.matvec(W[n], below));
            if (W_rec[n]) u = tape.add(u, tape.matvec(W_rec[n], o_prev[n]));
            NodeP o = tape.spike(u, layers[n].u_th, layers[n].a);
            u_prev[n] = u;
            o_prev[n] = o;
            below = o;
        }
        outputs.push_back(below);
    }

    LifOracleResult res;
    res.loss = tape.rate_mse_backward(outputs, Y);
    for (std::size_t n = 0; n < L; ++n) {
        res.dW.push_back(W[n]->grad);
        res.dW_rec.push_back(W_rec[n] ? W_rec[n]->grad : Tensor<double>());
    }
    return res;
}

}  // namespace nvsnn::testing
