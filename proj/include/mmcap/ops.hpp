#pragma once

#include "mmcap/tensor.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace mmcap {

// Integer matrix for token ids and masks.
struct IdMatrix {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<int32_t> values; // row-major

    int32_t at(int64_t r, int64_t c) const { return values[static_cast<size_t>(r * cols + c)]; }
    int32_t& at(int64_t r, int64_t c) { return values[static_cast<size_t>(r * cols + c)]; }
};

enum class Mode { Train, Eval };

namespace ops {

// Elementwise / shape plumbing. Every op records its backward step on the
// active tape when an input requires grad.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float s);
Tensor add_bias(const Tensor& x, const Tensor& bias); // bias broadcast over last dim
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor softmax_lastdim(const Tensor& x);
Tensor reshape(const Tensor& x, std::vector<int64_t> shape);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor concat_lastdim(const Tensor& a, const Tensor& b);
Tensor slice_lastdim(const Tensor& x, int64_t start, int64_t len);
Tensor select_axis1(const Tensor& x, int64_t t);               // [B,T,D] -> [B,D]
Tensor stack_axis1(const std::vector<Tensor>& rows);           // T x [B,D] -> [B,T,D]
Tensor sum_all(const Tensor& x);                               // -> scalar

// matmul: [M,K]*[K,N]; matmul_nt: [M,K]*[N,K]^T. Both validate finiteness.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// x: [..., D_in] -> [..., D_out] with weight [D_out, D_in] and bias [D_out].
Tensor fully_connected(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Same-size masked cross-correlation. x: [C,H,W] or [B,C,H,W]; kernel
// [C_out,C_in,kH,kW]; pad must equal (kH-1)/2, (kW-1)/2. mask (optional,
// [kH,kW]) multiplies kernel taps in forward and backward; masked taps
// receive exactly-zero gradient.
Tensor conv2d(const Tensor& x, const Tensor& kernel, int64_t pad_h, int64_t pad_w,
              const std::optional<Tensor>& mask = std::nullopt);

// table: [V,D]; ids: [B,L] -> [B,L,D]. Gradient scatter-adds into the table.
Tensor embedding(const Tensor& table, const IdMatrix& ids);

// features: [B,S,T,D], weights: [B,S,T] -> [B,S,D], x_bs = sum_t w_bst*F_bst.
Tensor weighted_sum_positions(const Tensor& features, const Tensor& weights);

// Mean of -log softmax(logits)[target] over positions where mask != 0.
// logits: [B,S,V]. Errors when the mask selects nothing.
Tensor masked_cross_entropy(const Tensor& logits, const IdMatrix& targets, const IdMatrix& mask);

} // namespace ops

// Spatial batch normalization over [B,C,H,W] with per-channel affine and
// running statistics for eval mode.
struct BatchNorm2d {
    Tensor gamma;
    Tensor beta;
    std::vector<float> running_mean;
    std::vector<float> running_var;
    bool initialized = false;
    float momentum = 0.1f;
    float eps = 1e-5f;

    explicit BatchNorm2d(int64_t channels);
    BatchNorm2d() = default;

    int64_t channels() const { return gamma.defined() ? gamma.numel() : 0; }
    Tensor forward(const Tensor& x, Mode mode);
};

} // namespace mmcap
