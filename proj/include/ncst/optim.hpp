#pragma once

#include <cmath>
#include <vector>

#include "ncst/graph.hpp"
#include "ncst/tensor.hpp"

namespace ncst {

/// Bias-corrected Adam over a fixed parameter list. Slot order follows the
/// parameter list, so updates are deterministic.
template <class Real>
struct AdamStateT {
    struct Slot {
        TensorT<Real> m, v;
    };
    std::vector<Slot> slots;
    int64_t t = 0;
    Real lr = Real(1e-3);
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real eps = Real(1e-8);

    AdamStateT() = default;
    AdamStateT(const std::vector<ParamT<Real>*>& params, Real learning_rate)
        : lr(learning_rate) {
        slots.reserve(params.size());
        for (auto* p : params) slots.push_back({TensorT<Real>(p->value.shape), TensorT<Real>(p->value.shape)});
    }
};

template <class Real>
void adam_step(const std::vector<ParamT<Real>*>& params, AdamStateT<Real>& st) {
    if (params.size() != st.slots.size()) throw NumericError("adam_step: state/parameter mismatch");
    st.t += 1;
    const Real bc1 = Real(1) - std::pow(st.beta1, static_cast<Real>(st.t));
    const Real bc2 = Real(1) - std::pow(st.beta2, static_cast<Real>(st.t));
    for (size_t i = 0; i < params.size(); ++i) {
        ParamT<Real>& p = *params[i];
        auto& slot = st.slots[i];
        for (int64_t j = 0; j < p.value.size(); ++j) {
            const Real g = p.grad[j];
            slot.m[j] = st.beta1 * slot.m[j] + (Real(1) - st.beta1) * g;
            slot.v[j] = st.beta2 * slot.v[j] + (Real(1) - st.beta2) * g * g;
            const Real mhat = slot.m[j] / bc1;
            const Real vhat = slot.v[j] / bc2;
            p.value[j] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

template <class Real>
void zero_grads(const std::vector<ParamT<Real>*>& params) {
    for (auto* p : params) p->zero_grad();
}

template <class Real>
double global_grad_norm(const std::vector<ParamT<Real>*>& params) {
    double acc = 0;
    for (auto* p : params)
        for (int64_t j = 0; j < p->grad.size(); ++j) {
            const double g = static_cast<double>(p->grad[j]);
            acc += g * g;
        }
    return std::sqrt(acc);
}

/// Scale all gradients so the global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
template <class Real>
double clip_global_norm(const std::vector<ParamT<Real>*>& params, double max_norm) {
    if (max_norm <= 0) throw NumericError("clip_global_norm: max_norm must be positive");
    const double norm = global_grad_norm(params);
    // The relative slack keeps the operation idempotent: a freshly clipped
    // set whose norm lands a few ulps above max_norm is left alone.
    if (norm > max_norm * (1.0 + 1e-12) && norm > 0) {
        const Real s = static_cast<Real>(max_norm / norm);
        for (auto* p : params)
            for (auto& g : p->grad.v) g *= s;
    }
    return norm;
}

}  // namespace ncst
