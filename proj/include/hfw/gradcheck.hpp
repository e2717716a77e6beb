#pragma once

// Central finite-difference check of tape gradients (double precision).

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hfw/autodiff.hpp"

namespace hfw {

/// Records a scalar loss from the given trainable leaves.
using LossBuilder = std::function<ad::NodeId(ad::Tape<double>&, const std::vector<ad::NodeId>&)>;

struct GradCheckResult {
    double max_rel_error = 0;  // over parameters, ‖g_fd − g_ad‖ / max(‖g_fd‖, ‖g_ad‖, floor)
    double loss = 0;
};

inline double eval_loss(const std::vector<Tensor<double>>& params, const LossBuilder& build) {
    ad::Tape<double> tape;
    std::vector<ad::NodeId> ids;
    for (const auto& p : params) ids.push_back(tape.trainable(p));
    return tape.value(build(tape, ids))[0];
}

inline GradCheckResult grad_check(std::vector<Tensor<double>> params, const LossBuilder& build, double step = 1e-5,
                                  double floor = 1e-10) {
    ad::Tape<double> tape;
    std::vector<ad::NodeId> ids;
    for (const auto& p : params) ids.push_back(tape.trainable(p));
    const auto loss = build(tape, ids);
    const auto grads = tape.backward(loss);
    GradCheckResult r;
    r.loss = tape.value(loss)[0];
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto it = grads.find(ids[k].v);
        double num = 0, na = 0, nf = 0;
        for (std::size_t i = 0; i < params[k].numel(); ++i) {
            const double orig = params[k][i];
            params[k][i] = orig + step;
            const double up = eval_loss(params, build);
            params[k][i] = orig - step;
            const double dn = eval_loss(params, build);
            params[k][i] = orig;
            const double fd = (up - dn) / (2 * step);
            const double ag = it == grads.end() ? 0.0 : it->second[i];
            num += (fd - ag) * (fd - ag);
            na += ag * ag;
            nf += fd * fd;
        }
        const double denom = std::max({std::sqrt(na), std::sqrt(nf), floor});
        r.max_rel_error = std::max(r.max_rel_error, std::sqrt(num) / denom);
    }
    return r;
}

}  // namespace hfw
