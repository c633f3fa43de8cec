#pragma once

#include "mmcap/ops.hpp"
#include "mmcap/tensor.hpp"

#include <random>
#include <vector>

namespace mmcap {

// Joint grid I[i][j] = [e_i || h_j]. Accepts [S,D_s]+[T,D_m] -> [S,T,D_s+D_m]
// or batched [B,S,D_s]+[B,T,D_m] -> [B,S,T,D_s+D_m].
Tensor construct_joint_tensor(const Tensor& text_embedding, const Tensor& modality_hidden);

// Binary [kH,kW] mask zeroing kernel rows that would read future text
// positions (text runs along the H axis, same padding). Extents must be odd.
Tensor causal_text_mask(int64_t k_h = 3, int64_t k_w = 3);

// Bottleneck block over [B,D,S,T] grids:
//   x + bn3(conv3_masked(relu(bn2(conv2(relu(bn1(conv1(x))))))))
// with channel flow D -> 2D -> floor(D/2) -> D.
struct ResidualBlockParams {
    Tensor conv1; // [2D, D, 1, 1]
    Tensor conv2; // [D/2, 2D, 1, 1]
    Tensor conv3; // [D, D/2, 3, 3], causally masked
    BatchNorm2d bn1;
    BatchNorm2d bn2;
    BatchNorm2d bn3;

    ResidualBlockParams() = default;
    ResidualBlockParams(int64_t channels, std::mt19937& rng);

    int64_t channels() const { return conv1.defined() ? conv1.dim(1) : 0; }
};

Tensor residual_block(const Tensor& x, ResidualBlockParams& p, const Tensor& mask, Mode mode);

// The stacked masked residual CNN with the outer dense skip from stack input
// to stack output. Input and output are channels-last [B,S,T,D] grids.
struct MmCnn {
    std::vector<ResidualBlockParams> blocks;
    Tensor mask;

    MmCnn() = default;
    MmCnn(int64_t channels, int64_t block_count, std::mt19937& rng);

    Tensor forward(const Tensor& joint, Mode mode);
};

} // namespace mmcap
