#include "mmcap/adam.hpp"

#include <cmath>

namespace mmcap {

void AdamOptimizer::register_param(const std::string& name, Tensor param) {
    require(param.defined() && param.requires_grad(), "bad_param",
            "adam: parameter '" + name + "' must require gradients");
    Slot slot;
    slot.name = name;
    slot.param = std::move(param);
    slot.state.m.assign(static_cast<size_t>(slot.param.numel()), 0.0f);
    slot.state.v.assign(static_cast<size_t>(slot.param.numel()), 0.0f);
    slots_.push_back(std::move(slot));
}

void AdamOptimizer::step() {
    for (const Slot& s : slots_) {
        require(s.param.grad_allocated(), "missing_grad",
                "adam: parameter '" + s.name + "' has no gradient; run backward first");
    }

    float clip_scale = 1.0f;
    if (cfg_.clip_norm > 0.0f) {
        double sq = 0.0;
        for (Slot& s : slots_) {
            for (float g : s.param.grad()) {
                sq += static_cast<double>(g) * g;
            }
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) {
            clip_scale = static_cast<float>(cfg_.clip_norm / norm);
        }
    }

    ++t_;
    const double corr1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
    const double corr2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));

    for (Slot& s : slots_) {
        auto grad = s.param.grad();
        auto data = s.param.data();
        for (size_t i = 0; i < grad.size(); ++i) {
            const float g = grad[i] * clip_scale;
            s.state.m[i] = cfg_.beta1 * s.state.m[i] + (1.0f - cfg_.beta1) * g;
            s.state.v[i] = cfg_.beta2 * s.state.v[i] + (1.0f - cfg_.beta2) * g * g;
            const double mhat = s.state.m[i] / corr1;
            const double vhat = s.state.v[i] / corr2;
            data[i] -= static_cast<float>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
        s.param.zero_grad();
    }
}

} // namespace mmcap
