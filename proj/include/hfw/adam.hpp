#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "hfw/tensor.hpp"

namespace hfw {

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class T>
struct AdamState {
    AdamHyper hyper;
    std::vector<Tensor<T>> m, v;
    std::uint64_t step = 0;
};

/// One Adam update with bias correction. `grads[i] == nullptr` means zero gradient.
template <class T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads, AdamState<T>& st) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: params/grads count mismatch");
    if (st.m.empty()) {
        for (auto* p : params) {
            st.m.emplace_back(p->shape());
            st.v.emplace_back(p->shape());
        }
    }
    if (st.m.size() != params.size()) throw std::invalid_argument("adam_step: state/params count mismatch");
    ++st.step;
    const auto& h = st.hyper;
    const double bc1 = 1.0 - std::pow(h.beta1, double(st.step));
    const double bc2 = 1.0 - std::pow(h.beta2, double(st.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor<T>& p = *params[k];
        require_same_shape(p.shape(), st.m[k].shape(), "adam_step moments");
        T* m = st.m[k].raw();
        T* v = st.v[k].raw();
        const T* g = grads[k] ? grads[k]->raw() : nullptr;
        if (g) require_same_shape(p.shape(), grads[k]->shape(), "adam_step grad");
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = g ? double(g[i]) : 0.0;
            const double mi = h.beta1 * double(m[i]) + (1.0 - h.beta1) * gi;
            const double vi = h.beta2 * double(v[i]) + (1.0 - h.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1, vhat = vi / bc2;
            p[i] = static_cast<T>(double(p[i]) - h.lr * mhat / (std::sqrt(vhat) + h.eps));
        }
    }
}

}  // namespace hfw
