#pragma once
// Inputs and configs behind the golden forward fixtures in tests/data/golden.

#include "svan/model.hpp"
#include "svan/random.hpp"

namespace fixtures {

inline svan::SvanConfig golden_config() {
    svan::SvanConfig c;
    c.scale = 4;
    c.num_blocks = 2;
    c.seed = 20240607;
    return c;
}

inline svan::Tensor4 noise(svan::Shape shape, std::uint64_t seed) {
    svan::Rng rng(seed);
    svan::Tensor4 t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = svan::uniform01(rng);
    return t;
}

inline svan::Tensor4 slkab_input() { return noise({1, 32, 8, 8}, 101); }
inline svan::Tensor4 svan_input() { return noise({1, 3, 8, 8}, 202); }

}  // namespace fixtures
