#pragma once

#include "mmcap/tensor.hpp"

#include <string>
#include <vector>

namespace mmcap {

struct AdamConfig {
    float lr = 5e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float clip_norm = 5.0f; // global-norm clip applied before each step; <=0 disables
};

// First/second moment buffers for one parameter tensor.
struct AdamState {
    std::vector<float> m;
    std::vector<float> v;
};

class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

    void register_param(const std::string& name, Tensor param);

    // Clips the global gradient norm, applies the bias-corrected update to
    // every registered parameter, then zeroes their gradients. Errors if any
    // registered parameter has no gradient buffer.
    void step();

    void set_lr(float lr) { cfg_.lr = lr; }
    float lr() const { return cfg_.lr; }
    int64_t step_count() const { return t_; }
    size_t param_count() const { return slots_.size(); }

private:
    struct Slot {
        std::string name;
        Tensor param;
        AdamState state;
    };
    AdamConfig cfg_;
    std::vector<Slot> slots_;
    int64_t t_ = 0;
};

} // namespace mmcap
