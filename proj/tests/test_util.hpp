#pragma once

#include "mmcap/tensor.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace testutil {

inline void fill_random(mmcap::Tensor& t, std::mt19937& rng, float lo = -1.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> dist(lo, hi);
    for (float& v : t.data()) {
        v = dist(rng);
    }
}

inline mmcap::Tensor random_tensor(std::vector<int64_t> shape, std::mt19937& rng,
                                   bool requires_grad = false, float lo = -1.0f,
                                   float hi = 1.0f) {
    mmcap::Tensor t = mmcap::Tensor::zeros(std::move(shape), requires_grad);
    fill_random(t, rng, lo, hi);
    return t;
}

// Relative error with a unit floor so near-zero gradients are compared
// absolutely rather than blowing up the ratio.
inline double rel_err(double actual, double expected) {
    return std::abs(actual - expected) /
           std::max({std::abs(actual), std::abs(expected), 1.0});
}

inline std::vector<double> widen(std::span<const float> v) {
    return std::vector<double>(v.begin(), v.end());
}

} // namespace testutil
