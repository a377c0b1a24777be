#include "svan/adam.hpp"

#include <cmath>

#include "svan/error.hpp"

namespace svan {

void adam_step(NamedTensors& params, const NamedTensors& grads, AdamState& state, double lr) {
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(state.beta1, t);
    const double correct2 = 1.0 - std::pow(state.beta2, t);
    for (auto& [name, p] : params) {
        const auto it = grads.find(name);
        if (it == grads.end()) continue;
        const Tensor4& g = it->second;
        if (g.shape() != p.shape()) throw DimensionError("adam_step: gradient shape mismatch for " + name);
        auto [mi, m_new] = state.m.try_emplace(name, p.shape());
        auto [vi, v_new] = state.v.try_emplace(name, p.shape());
        Tensor4& m = mi->second;
        Tensor4& v = vi->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correct1;
            const double v_hat = v[i] / correct2;
            p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

}  // namespace svan
