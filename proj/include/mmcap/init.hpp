#pragma once

#include "mmcap/tensor.hpp"

#include <random>

namespace mmcap {

// Xavier-uniform fill: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
inline void fill_xavier(Tensor& t, std::mt19937& rng, int64_t fan_in, int64_t fan_out) {
    const float a = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    std::uniform_real_distribution<float> dist(-a, a);
    for (float& v : t.data()) {
        v = dist(rng);
    }
}

inline void fill_uniform(Tensor& t, std::mt19937& rng, float lo, float hi) {
    std::uniform_real_distribution<float> dist(lo, hi);
    for (float& v : t.data()) {
        v = dist(rng);
    }
}

} // namespace mmcap
