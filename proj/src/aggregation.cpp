#include "mmcap/aggregation.hpp"

#include "mmcap/init.hpp"

#include <cmath>

namespace mmcap {

AlignParams::AlignParams(int64_t in_dim, int64_t out_dim, std::mt19937& rng) {
    weight = Tensor::zeros({out_dim, in_dim}, true);
    bias = Tensor::zeros({out_dim}, true);
    fill_xavier(weight, rng, in_dim, out_dim);
}

SeParams::SeParams(int64_t d_c, int64_t t_c, std::mt19937& rng) {
    require(t_c >= 2, "bad_config", "SE pipeline needs at least 2 positions");
    const int64_t half = t_c / 2;
    w1 = Tensor::zeros({1, d_c}, true);
    b1 = Tensor::zeros({1}, true);
    w2 = Tensor::zeros({half, t_c}, true);
    b2 = Tensor::zeros({half}, true);
    w3 = Tensor::zeros({t_c, half}, true);
    b3 = Tensor::zeros({t_c}, true);
    fill_xavier(w1, rng, d_c, 1);
    fill_xavier(w2, rng, t_c, half);
    fill_xavier(w3, rng, half, t_c);
}

std::string decision_name(ModalityDecision d) {
    switch (d) {
    case ModalityDecision::Visual:
        return "visual";
    case ModalityDecision::Audio:
        return "audio";
    default:
        return "tie";
    }
}

Tensor align_and_concat(const std::optional<Tensor>& visual_joint,
                        const std::optional<Tensor>& audio_joint, const AlignParams& align_v,
                        const AlignParams& align_a) {
    require(visual_joint.has_value() || audio_joint.has_value(), "bad_config",
            "align_and_concat: at least one modality grid is required");
    std::optional<Tensor> aligned_v;
    std::optional<Tensor> aligned_a;
    if (visual_joint) {
        require(visual_joint->rank() == 4, "bad_shape", "align_and_concat expects [B,S,T,D]");
        aligned_v = ops::fully_connected(*visual_joint, align_v.weight, align_v.bias);
    }
    if (audio_joint) {
        require(audio_joint->rank() == 4, "bad_shape", "align_and_concat expects [B,S,T,D]");
        aligned_a = ops::fully_connected(*audio_joint, align_a.weight, align_a.bias);
    }
    if (aligned_v && aligned_a) {
        require(aligned_v->dim(0) == aligned_a->dim(0) &&
                    aligned_v->dim(1) == aligned_a->dim(1),
                "shape_mismatch", "align_and_concat: text extents differ between modalities");
        return ops::concat(*aligned_v, *aligned_a, 2); // visual positions first
    }
    return aligned_v ? *aligned_v : *aligned_a;
}

Tensor se_weights(const Tensor& fused, const SeParams& p) {
    require(fused.rank() >= 2, "bad_shape", "se_weights expects [..., T_c, D_c]");
    const int64_t t_c = fused.dim(fused.rank() - 2);
    require(t_c == p.t_c(), "shape_mismatch",
            "se_weights: position count " + std::to_string(t_c) +
                " does not match SE parameters sized for " + std::to_string(p.t_c()));

    // fc1 squeezes each position to one unit; drop the trailing singleton.
    Tensor u = ops::fully_connected(fused, p.w1, p.b1);
    std::vector<int64_t> squeezed(fused.shape().begin(), fused.shape().end() - 1);
    u = ops::reshape(u, squeezed);
    u = ops::relu(ops::fully_connected(u, p.w2, p.b2));
    u = ops::fully_connected(u, p.w3, p.b3);
    return ops::softmax_lastdim(u);
}

Tensor aggregate(const Tensor& fused, const Tensor& weights) {
    require(fused.rank() == 4 && weights.rank() == 3, "bad_shape",
            "aggregate expects fused [B,S,T,D] and weights [B,S,T]");
    const int64_t rows = weights.dim(0) * weights.dim(1);
    const int64_t t = weights.dim(2);
    auto wd = weights.data();
    for (int64_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (int64_t j = 0; j < t; ++j) {
            sum += wd[static_cast<size_t>(r * t + j)];
        }
        require(std::abs(sum - 1.0) <= 1e-5, "weight_sum",
                "aggregate: weights must sum to 1, got " + std::to_string(sum));
    }
    return ops::weighted_sum_positions(fused, weights);
}

std::pair<double, double> activation_energies(std::span<const float> weights, int64_t t_v) {
    require(t_v >= 0 && t_v <= static_cast<int64_t>(weights.size()), "bad_shape",
            "activation_energies: visual prefix exceeds weight vector");
    double total = 0.0;
    for (float w : weights) {
        total += w;
    }
    require(total > 0.0, "weight_sum", "activation_energies: weights must be positive");
    double e_v = 0.0;
    double e_a = 0.0;
    for (size_t j = 0; j < weights.size(); ++j) {
        const double w = weights[j] / total;
        if (static_cast<int64_t>(j) < t_v) {
            e_v += w * w;
        } else {
            e_a += w * w;
        }
    }
    return {e_v, e_a};
}

ModalityDecision attribute(double e_v, double e_a) {
    require(e_v >= 0.0 && e_a >= 0.0, "bad_energy", "attribute: energies must be nonnegative");
    if (e_v > e_a) {
        return ModalityDecision::Visual;
    }
    if (e_a > e_v) {
        return ModalityDecision::Audio;
    }
    return ModalityDecision::Tie;
}

} // namespace mmcap
