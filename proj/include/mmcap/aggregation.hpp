#pragma once

#include "mmcap/ops.hpp"
#include "mmcap/tensor.hpp"

#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>

namespace mmcap {

// Per-modality affine map onto the common dimension D_c.
struct AlignParams {
    Tensor weight; // [D_c, D_m]
    Tensor bias;   // [D_c]

    AlignParams() = default;
    AlignParams(int64_t in_dim, int64_t out_dim, std::mt19937& rng);
};

// Squeeze-and-excitation weight pipeline over the fused position axis:
// w = softmax(fc3(relu(fc2(fc1_per_position(F))))).
struct SeParams {
    Tensor w1; // [1, D_c]
    Tensor b1; // [1]
    Tensor w2; // [T_c/2, T_c]
    Tensor b2; // [T_c/2]
    Tensor w3; // [T_c, T_c/2]
    Tensor b3; // [T_c]

    SeParams() = default;
    SeParams(int64_t d_c, int64_t t_c, std::mt19937& rng);

    int64_t t_c() const { return w3.defined() ? w3.dim(0) : 0; }
};

enum class ModalityDecision { Visual, Audio, Tie };

std::string decision_name(ModalityDecision d);

struct WordAttribution {
    int64_t index = 0; // position of the generated word
    double e_v = 0.0;
    double e_a = 0.0;
    ModalityDecision decision = ModalityDecision::Tie;
};

// Aligns each modality grid ([B,S,T_m,D_m]) to D_c and concatenates along the
// position axis, visual first. Either grid may be absent (single-modality
// configurations); at least one must be present.
Tensor align_and_concat(const std::optional<Tensor>& visual_joint,
                        const std::optional<Tensor>& audio_joint, const AlignParams& align_v,
                        const AlignParams& align_a);

// fused: [..., T_c, D_c] -> probability weights [..., T_c].
Tensor se_weights(const Tensor& fused, const SeParams& p);

// x_i = sum_j w_j * F_ij. fused: [B,S,T,D], weights: [B,S,T] (rows must sum
// to 1 within 1e-5) -> [B,S,D].
Tensor aggregate(const Tensor& fused, const Tensor& weights);

// Energies from one weight row; the row is renormalized in double precision
// before squaring. e_v covers positions [0, t_v), e_a the rest.
std::pair<double, double> activation_energies(std::span<const float> weights, int64_t t_v);

ModalityDecision attribute(double e_v, double e_a);

} // namespace mmcap
