#pragma once

#include <functional>

#include "nvsnn/tensor.hpp"

// Central finite-difference gradient checking against a scalar loss.
// Independent of every analytic backward path it is used to verify.

namespace nvsnn::testing {

struct FdReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::string worst_param;
    std::size_t worst_index = 0;
};

// loss_fn re-evaluates the scalar loss from the current parameter values.
// For each coordinate: central difference (f(x+h) - f(x-h)) / 2h, compared
// against the analytic gradient with rel err = |a-n| / max(1, |a|, |n|).
inline FdReport finite_diff_check(const std::function<double()>& loss_fn,
                                  const std::vector<std::pair<std::string, Tensor<double>*>>& params,
                                  const std::vector<const Tensor<double>*>& analytic,
                                  double step = 1e-5) {
    FdReport rep;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<double>& p = *params[pi].second;
        const Tensor<double>& a = *analytic[pi];
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double keep = p.data[i];
            p.data[i] = keep + step;
            const double up = loss_fn();
            p.data[i] = keep - step;
            const double down = loss_fn();
            p.data[i] = keep;
            const double numeric = (up - down) / (2.0 * step);
            const double diff = std::abs(numeric - a.data[i]);
            const double rel = diff / std::max({1.0, std::abs(numeric), std::abs(a.data[i])});
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = params[pi].first;
                rep.worst_index = i;
            }
            ++rep.checked;
        }
    }
    return rep;
}

}  // namespace nvsnn::testing
