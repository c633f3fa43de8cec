#pragma once

#include "mmcap/ops.hpp"
#include "mmcap/tensor.hpp"

#include <random>
#include <utility>

namespace mmcap {

// One LSTM cell. Gate blocks are stacked in the fixed order
// [input, forget, candidate, output] along the 4H axis.
struct LstmParams {
    Tensor w_input;  // [4H, D_in]
    Tensor w_hidden; // [4H, H]
    Tensor bias;     // [4H]

    LstmParams() = default;
    // Xavier-uniform weights, zero bias except the forget block at 1.
    LstmParams(int64_t input_dim, int64_t hidden_dim, std::mt19937& rng);

    int64_t hidden_dim() const { return w_hidden.defined() ? w_hidden.dim(1) : 0; }
    int64_t input_dim() const { return w_input.defined() ? w_input.dim(1) : 0; }
};

// x: [B,D_in], h/c: [B,H] -> (h', c').
std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const LstmParams& p);

// Unrolls lstm_step over [B,T,D_in] from the zero state; returns all hidden
// states as [B,T,H]. Row t depends only on inputs up to t.
Tensor lstm_encode(const Tensor& features, const LstmParams& p);

} // namespace mmcap
