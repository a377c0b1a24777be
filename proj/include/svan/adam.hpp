#pragma once

#include <cstdint>

#include "svan/tensor.hpp"

namespace svan {

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    NamedTensors m;
    NamedTensors v;
};

/// One bias-corrected Adam update of every entry of `params` that has a gradient.
/// Moments are created lazily with the parameter's shape.
void adam_step(NamedTensors& params, const NamedTensors& grads, AdamState& state, double lr);

}  // namespace svan
