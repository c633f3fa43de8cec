#include "mmcap/mmcnn.hpp"

#include "mmcap/init.hpp"

#include <cstring>

namespace mmcap {

namespace {

std::vector<float>& ensure_grad(TensorNode& n) {
    if (n.grad.empty()) {
        n.grad.assign(n.data.size(), 0.0f);
    }
    return n.grad;
}

} // namespace

Tensor construct_joint_tensor(const Tensor& text_embedding, const Tensor& modality_hidden) {
    require(text_embedding.rank() == modality_hidden.rank(), "shape_mismatch",
            "construct_joint_tensor: rank mismatch");
    require(text_embedding.rank() == 2 || text_embedding.rank() == 3, "bad_shape",
            "construct_joint_tensor expects [S,D] or [B,S,D] inputs");
    const bool batched = text_embedding.rank() == 3;
    const int64_t b = batched ? text_embedding.dim(0) : 1;
    require(!batched || modality_hidden.dim(0) == b, "shape_mismatch",
            "construct_joint_tensor: batch mismatch");
    const int64_t s = text_embedding.dim(batched ? 1 : 0);
    const int64_t d_s = text_embedding.dim(batched ? 2 : 1);
    const int64_t t = modality_hidden.dim(batched ? 1 : 0);
    const int64_t d_m = modality_hidden.dim(batched ? 2 : 1);
    const int64_t d = d_s + d_m;

    std::vector<int64_t> out_shape =
        batched ? std::vector<int64_t>{b, s, t, d} : std::vector<int64_t>{s, t, d};
    Tensor y = Tensor::zeros(out_shape);
    auto yd = y.data();
    auto ed = text_embedding.data();
    auto hd = modality_hidden.data();
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t i = 0; i < s; ++i) {
            const float* erow = ed.data() + (bi * s + i) * d_s;
            for (int64_t j = 0; j < t; ++j) {
                float* cell = yd.data() + ((bi * s + i) * t + j) * d;
                std::memcpy(cell, erow, static_cast<size_t>(d_s) * 4);
                std::memcpy(cell + d_s, hd.data() + (bi * t + j) * d_m,
                            static_cast<size_t>(d_m) * 4);
            }
        }
    }

    if (Tape::active() && (text_embedding.requires_grad() || modality_hidden.requires_grad())) {
        y.set_requires_grad(true);
        Tape::active()->record([en = text_embedding.node(), hn = modality_hidden.node(),
                                yn = y.node(), b, s, t, d_s, d_m, d] {
            if (yn->grad.empty()) {
                return;
            }
            if (en->requires_grad) {
                auto& g = ensure_grad(*en);
                for (int64_t bi = 0; bi < b; ++bi) {
                    for (int64_t i = 0; i < s; ++i) {
                        float* dst = g.data() + (bi * s + i) * d_s;
                        for (int64_t j = 0; j < t; ++j) {
                            const float* src = yn->grad.data() + ((bi * s + i) * t + j) * d;
                            for (int64_t q = 0; q < d_s; ++q) {
                                dst[q] += src[q];
                            }
                        }
                    }
                }
            }
            if (hn->requires_grad) {
                auto& g = ensure_grad(*hn);
                for (int64_t bi = 0; bi < b; ++bi) {
                    for (int64_t j = 0; j < t; ++j) {
                        float* dst = g.data() + (bi * t + j) * d_m;
                        for (int64_t i = 0; i < s; ++i) {
                            const float* src =
                                yn->grad.data() + ((bi * s + i) * t + j) * d + d_s;
                            for (int64_t q = 0; q < d_m; ++q) {
                                dst[q] += src[q];
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

Tensor causal_text_mask(int64_t k_h, int64_t k_w) {
    require(k_h >= 1 && k_w >= 1 && k_h % 2 == 1 && k_w % 2 == 1, "even_kernel",
            "causal_text_mask: kernel extents must be odd");
    Tensor mask = Tensor::full({k_h, k_w}, 1.0f);
    auto md = mask.data();
    const int64_t center = k_h / 2;
    for (int64_t r = center + 1; r < k_h; ++r) {
        for (int64_t c = 0; c < k_w; ++c) {
            md[static_cast<size_t>(r * k_w + c)] = 0.0f;
        }
    }
    return mask;
}

ResidualBlockParams::ResidualBlockParams(int64_t channels, std::mt19937& rng)
    : bn1(2 * channels), bn2(channels / 2), bn3(channels) {
    require(channels >= 2, "bad_shape", "residual block needs at least 2 channels");
    const int64_t half = channels / 2;
    conv1 = Tensor::zeros({2 * channels, channels, 1, 1}, true);
    conv2 = Tensor::zeros({half, 2 * channels, 1, 1}, true);
    conv3 = Tensor::zeros({channels, half, 3, 3}, true);
    fill_xavier(conv1, rng, channels, 2 * channels);
    fill_xavier(conv2, rng, 2 * channels, half);
    fill_xavier(conv3, rng, half * 9, channels * 9);
}

Tensor residual_block(const Tensor& x, ResidualBlockParams& p, const Tensor& mask, Mode mode) {
    require(x.rank() == 4, "bad_shape", "residual_block expects [B,D,S,T]");
    require(x.dim(1) == p.channels(), "shape_mismatch",
            "residual_block: channel count " + std::to_string(x.dim(1)) + " != " +
                std::to_string(p.channels()));
    Tensor h = ops::relu(p.bn1.forward(ops::conv2d(x, p.conv1, 0, 0), mode));
    h = ops::relu(p.bn2.forward(ops::conv2d(h, p.conv2, 0, 0), mode));
    h = p.bn3.forward(ops::conv2d(h, p.conv3, 1, 1, mask), mode);
    return ops::add(x, h);
}

MmCnn::MmCnn(int64_t channels, int64_t block_count, std::mt19937& rng)
    : mask(causal_text_mask(3, 3)) {
    require(block_count >= 0, "bad_config", "block count must be >= 0");
    blocks.reserve(static_cast<size_t>(block_count));
    for (int64_t i = 0; i < block_count; ++i) {
        blocks.emplace_back(channels, rng);
    }
}

Tensor MmCnn::forward(const Tensor& joint, Mode mode) {
    require(joint.rank() == 4, "bad_shape", "MmCnn::forward expects [B,S,T,D]");
    if (blocks.empty()) {
        return joint; // degenerate stack: only the skip path remains
    }
    // Text positions ride the H axis so the causal mask blanks kernel rows
    // that would peek at future words.
    Tensor grid = ops::permute(joint, {0, 3, 1, 2}); // [B,D,S,T]
    Tensor h = grid;
    for (ResidualBlockParams& block : blocks) {
        h = residual_block(h, block, mask, mode);
    }
    Tensor fused = ops::add(grid, h); // dense skip from stack input to output
    return ops::permute(fused, {0, 2, 3, 1});
}

} // namespace mmcap
