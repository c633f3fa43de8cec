#include "mmcap/ops.hpp"

#include "mmcap/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mmcap {

namespace {

std::vector<float>& ensure_grad(TensorNode& n) {
    if (n.grad.empty()) {
        n.grad.assign(n.data.size(), 0.0f);
    }
    return n.grad;
}

bool recording(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::active()) {
        return false;
    }
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) {
            return true;
        }
    }
    return false;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.shape() == b.shape(), "shape_mismatch",
            std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                shape_string(b.shape()) + " differ");
}

int64_t leading_rows(const Tensor& x) { return x.numel() / x.dim(x.rank() - 1); }

} // namespace

namespace ops {

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor y = Tensor::zeros(a.shape());
    auto yd = y.data();
    auto ad = a.data();
    auto bd = b.data();
    for (size_t i = 0; i < yd.size(); ++i) {
        yd[i] = ad[i] + bd[i];
    }
    if (recording({&a, &b})) {
        y.set_requires_grad(true);
        Tape::active()->record([an = a.node(), bn = b.node(), yn = y.node()] {
            if (yn->grad.empty()) {
                return;
            }
            if (an->requires_grad) {
                auto& g = ensure_grad(*an);
                for (size_t i = 0; i < g.size(); ++i) {
                    g[i] += yn->grad[i];
                }
            }
            if (bn->requires_grad) {
                auto& g = ensure_grad(*bn);
                for (size_t i = 0; i < g.size(); ++i) {
                    g[i] += yn->grad[i];
                }
            }
        });
    }
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor y = Tensor::zeros(a.shape());
    auto yd = y.data();
    auto ad = a.data();
    auto bd = b.data();
    for (size_t i = 0; i < yd.size(); ++i) {
        yd[i] = ad[i] * bd[i];
    }
    if (recording({&a, &b})) {
        y.set_requires_grad(true);
        Tape::active()->record([an = a.node(), bn = b.node(), yn = y.node()] {
            if (yn->grad.empty()) {
                return;
            }
            if (an->requires_grad) {
                auto& g = ensure_grad(*an);
                for (size_t i = 0; i < g.size(); ++i) {
                    g[i] += bn->data[i] * yn->grad[i];
                }
            }
            if (bn->requires_grad) {
                auto& g = ensure_grad(*bn);
                for (size_t i = 0; i < g.size(); ++i) {
                    g[i] += an->data[i] * yn->grad[i];
                }
            }
        });
    }
    return y;
}

Tensor scale(const Tensor& x, float s) {
    Tensor y = Tensor::zeros(x.shape());
    auto yd = y.data();
    auto xd = x.data();
    for (size_t i = 0; i < yd.size(); ++i) {
        yd[i] = s * xd[i];
    }
    if (recording({&x})) {
        y.set_requires_grad(true);
        Tape::active()->record([xn = x.node(), yn = y.node(), s] {
            if (yn->grad.empty()) {
                return;
            }
            auto& g = ensure_grad(*xn);
            for (size_t i = 0; i < g.size(); ++i) {
                g[i] += s * yn->grad[i];
            }
        });
    }
    return y;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require(bias.rank() == 1 && bias.numel() == x.dim(x.rank() - 1), "shape_mismatch",
            "add_bias: bias length must equal last extent of x");
    Tensor y = Tensor::zeros(x.shape());
    const int64_t rows = leading_rows(x);
    const int64_t c = bias.numel();
    auto yd = y.data();
    auto xd = x.data();
    auto bd = bias.data();
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t j = 0; j < c; ++j) {
            yd[static_cast<size_t>(r * c + j)] = xd[static_cast<size_t>(r * c + j)] + bd[static_cast<size_t>(j)];
        }
    }
    if (recording({&x, &bias})) {
        y.set_requires_grad(true);
        Tape::active()->record([xn = x.node(), bn = bias.node(), yn = y.node(), rows, c] {
            if (yn->grad.empty()) {
                return;
            }
            if (xn->requires_grad) {
                auto& g = ensure_grad(*xn);
                for (size_t i = 0; i < g.size(); ++i) {
                    g[i] += yn->grad[i];
                }
            }
            if (bn->requires_grad) {
                auto& g = ensure_grad(*bn);
                for (int64_t j = 0; j < c; ++j) {
                    double acc = 0.0;
                    for (int64_t r = 0; r < rows; ++r) {
                        acc += yn->grad[static_cast<size_t>(r * c + j)];
                    }
                    g[static_cast<size_t>(j)] += static_cast<float>(acc);
                }
            }
        });
    }
    return y;
}

Tensor relu(const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape());
    auto yd = y.data();
    auto xd = x.data();
    for (size_t i = 0; i < yd.size(); ++i) {
        yd[i] = xd[i] > 0.0f ? xd[i] : 0.0f;
    }
    if (recording({&x})) {
        y.set_requires_grad(true);
        Tape::active()->record([xn = x.node(), yn = y.node()] {
            if (yn->grad.empty()) {
                return;
            }
            auto& g = ensure_grad(*xn);
            for (size_t i = 0; i < g.size(); ++i) {
                g[i] += xn->data[i] > 0.0f ? yn->grad[i] : 0.0f;
            }
        });
    }
    return y;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape());
    auto yd = y.data();
    auto xd = x.data();
    for (size_t i = 0; i < yd.size(); ++i) {
        yd[i] = 1.0f / (1.0f + std::exp(-xd[i]));
    }
    if (recording({&x})) {
        y.set_requires_grad(true);
        Tape::active()->record([xn = x.node(), yn = y.node()] {
            if (yn->grad.empty()) {
                return;
            }
            auto& g = ensure_grad(*xn);
            for (size_t i = 0; i < g.size(); ++i) {
                const float s = yn->data[i];
                g[i] += yn->grad[i] * s * (1.0f - s);
            }
        });
    }
    return y;
}

Tensor tanh_op(const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape());
    auto yd = y.data();
    auto xd = x.data();
    for (size_t i = 0; i < yd.size(); ++i) {
        yd[i] = std::tanh(xd[i]);
    }
    if (recording({&x})) {
        y.set_requires_grad(true);
        Tape::active()->record([xn = x.node(), yn = y.node()] {
            if (yn->grad.empty()) {
                return;
            }
            auto& g = ensure_grad(*xn);
            for (size_t i = 0; i < g.size(); ++i) {
                const float t = yn->data[i];
                g[i] += yn->grad[i] * (1.0f - t * t);
            }
        });
    }
    return y;
}

Tensor softmax_lastdim(const Tensor& x) {
    const int64_t c = x.dim(x.rank() - 1);
    const int64_t rows = leading_rows(x);
    Tensor y = Tensor::zeros(x.shape());
    auto yd = y.data();
    auto xd = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* in = xd.data() + r * c;
        float* out = yd.data() + r * c;
        float mx = in[0];
        for (int64_t j = 1; j < c; ++j) {
            mx = std::max(mx, in[j]);
        }
        double denom = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            const float e = std::exp(in[j] - mx);
            out[j] = e;
            denom += e;
        }
        const float inv = static_cast<float>(1.0 / denom);
        for (int64_t j = 0; j < c; ++j) {
            out[j] *= inv;
        }
    }
    if (recording({&x})) {
        y.set_requires_grad(true);
        Tape::active()->record([xn = x.node(), yn = y.node(), rows, c] {
            if (yn->grad.empty()) {
                return;
            }
            auto& g = ensure_grad(*xn);
            for (int64_t r = 0; r < rows; ++r) {
                const float* yv = yn->data.data() + r * c;
                const float* dy = yn->grad.data() + r * c;
                double dot = 0.0;
                for (int64_t j = 0; j < c; ++j) {
                    dot += static_cast<double>(dy[j]) * yv[j];
                }
                float* gx = g.data() + r * c;
                for (int64_t j = 0; j < c; ++j) {
                    gx[j] += yv[j] * (dy[j] - static_cast<float>(dot));
                }
            }
        });
    }
    return y;
}

Tensor reshape(const Tensor& x, std::vector<int64_t> shape) {
    require(numel_of(shape) == x.numel(), "bad_shape",
            "reshape: element count mismatch " + shape_string(x.shape()) + " -> " +
                shape_string(shape));
    Tensor y = Tensor::from_data(std::move(shape),
                                 std::vector<float>(x.data().begin(), x.data().end()));
    if (recording({&x})) {
        y.set_requires_grad(true);
        Tape::active()->record([xn = x.node(), yn = y.node()] {
            if (yn->grad.empty()) {
                return;
            }
            auto& g = ensure_grad(*xn);
            for (size_t i = 0; i < g.size(); ++i) {
                g[i] += yn->grad[i];
            }
        });
    }
    return y;
}

namespace {

std::vector<int64_t> strides_of(const std::vector<int64_t>& shape) {
    std::vector<int64_t> s(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
        s[static_cast<size_t>(i)] = s[static_cast<size_t>(i + 1)] * shape[static_cast<size_t>(i + 1)];
    }
    return s;
}

// dst[out_index] = src[permuted index]; used by permute forward and (with the
// inverse permutation) backward.
void permute_copy(const float* src, float* dst, const std::vector<int64_t>& in_shape,
                  const std::vector<int>& perm, bool add) {
    const int r = static_cast<int>(in_shape.size());
    std::vector<int64_t> out_shape(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) {
        out_shape[static_cast<size_t>(i)] = in_shape[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    }
    const auto in_strides = strides_of(in_shape);
    const int64_t n = numel_of(in_shape);
    std::vector<int64_t> idx(static_cast<size_t>(r), 0);
    for (int64_t flat = 0; flat < n; ++flat) {
        int64_t src_off = 0;
        for (int i = 0; i < r; ++i) {
            src_off += idx[static_cast<size_t>(i)] * in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];
        }
        if (add) {
            dst[src_off] += src[flat];
        } else {
            dst[flat] = src[src_off];
        }
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) {
                break;
            }
            idx[static_cast<size_t>(i)] = 0;
        }
    }
}

} // namespace

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
    require(static_cast<int>(perm.size()) == x.rank(), "bad_shape",
            "permute: permutation rank mismatch");
    std::vector<int64_t> out_shape(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) {
        out_shape[i] = x.dim(perm[i]);
    }
    Tensor y = Tensor::zeros(out_shape);
    permute_copy(x.data().data(), y.data().data(), x.shape(), perm, false);
    if (recording({&x})) {
        y.set_requires_grad(true);
        Tape::active()->record([xn = x.node(), yn = y.node(), perm] {
            if (yn->grad.empty()) {
                return;
            }
            auto& g = ensure_grad(*xn);
            permute_copy(yn->grad.data(), g.data(), xn->shape, perm, true);
        });
    }
    return y;
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
    require(a.rank() == b.rank(), "shape_mismatch", "concat: rank mismatch");
    require(axis >= 0 && axis < a.rank(), "bad_shape", "concat: axis out of range");
    for (int i = 0; i < a.rank(); ++i) {
        if (i != axis) {
            require(a.dim(i) == b.dim(i), "shape_mismatch",
                    "concat: non-axis extents differ: " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
        }
    }
    std::vector<int64_t> out_shape = a.shape();
    out_shape[static_cast<size_t>(axis)] += b.dim(axis);

    int64_t outer = 1;
    for (int i = 0; i < axis; ++i) {
        outer *= a.dim(i);
    }
    int64_t inner = 1;
    for (int i = axis + 1; i < a.rank(); ++i) {
        inner *= a.dim(i);
    }
    const int64_t na = a.dim(axis) * inner;
    const int64_t nb = b.dim(axis) * inner;

    Tensor y = Tensor::zeros(out_shape);
    auto yd = y.data();
    auto ad = a.data();
    auto bd = b.data();
    for (int64_t o = 0; o < outer; ++o) {
        std::memcpy(yd.data() + o * (na + nb), ad.data() + o * na, static_cast<size_t>(na) * 4);
        std::memcpy(yd.data() + o * (na + nb) + na, bd.data() + o * nb, static_cast<size_t>(nb) * 4);
    }
    if (recording({&a, &b})) {
        y.set_requires_grad(true);
        Tape::active()->record([an = a.node(), bn = b.node(), yn = y.node(), outer, na, nb] {
            if (yn->grad.empty()) {
                return;
            }
            if (an->requires_grad) {
                auto& g = ensure_grad(*an);
                for (int64_t o = 0; o < outer; ++o) {
                    const float* src = yn->grad.data() + o * (na + nb);
                    float* dst = g.data() + o * na;
                    for (int64_t i = 0; i < na; ++i) {
                        dst[i] += src[i];
                    }
                }
            }
            if (bn->requires_grad) {
                auto& g = ensure_grad(*bn);
                for (int64_t o = 0; o < outer; ++o) {
                    const float* src = yn->grad.data() + o * (na + nb) + na;
                    float* dst = g.data() + o * nb;
                    for (int64_t i = 0; i < nb; ++i) {
                        dst[i] += src[i];
                    }
                }
            }
        });
    }
    return y;
}

Tensor concat_lastdim(const Tensor& a, const Tensor& b) { return concat(a, b, a.rank() - 1); }

Tensor slice_lastdim(const Tensor& x, int64_t start, int64_t len) {
    const int64_t c = x.dim(x.rank() - 1);
    require(start >= 0 && len >= 1 && start + len <= c, "bad_shape",
            "slice_lastdim: window out of range");
    std::vector<int64_t> out_shape = x.shape();
    out_shape.back() = len;
    const int64_t rows = leading_rows(x);
    Tensor y = Tensor::zeros(out_shape);
    auto yd = y.data();
    auto xd = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        std::memcpy(yd.data() + r * len, xd.data() + r * c + start, static_cast<size_t>(len) * 4);
    }
    if (recording({&x})) {
        y.set_requires_grad(true);
        Tape::active()->record([xn = x.node(), yn = y.node(), rows, c, start, len] {
            if (yn->grad.empty()) {
                return;
            }
            auto& g = ensure_grad(*xn);
            for (int64_t r = 0; r < rows; ++r) {
                for (int64_t j = 0; j < len; ++j) {
                    g[static_cast<size_t>(r * c + start + j)] += yn->grad[static_cast<size_t>(r * len + j)];
                }
            }
        });
    }
    return y;
}

Tensor select_axis1(const Tensor& x, int64_t t) {
    require(x.rank() == 3, "bad_shape", "select_axis1 expects [B,T,D]");
    const int64_t b = x.dim(0);
    const int64_t steps = x.dim(1);
    const int64_t d = x.dim(2);
    require(t >= 0 && t < steps, "bad_shape", "select_axis1: index out of range");
    Tensor y = Tensor::zeros({b, d});
    auto yd = y.data();
    auto xd = x.data();
    for (int64_t i = 0; i < b; ++i) {
        std::memcpy(yd.data() + i * d, xd.data() + (i * steps + t) * d, static_cast<size_t>(d) * 4);
    }
    if (recording({&x})) {
        y.set_requires_grad(true);
        Tape::active()->record([xn = x.node(), yn = y.node(), b, steps, d, t] {
            if (yn->grad.empty()) {
                return;
            }
            auto& g = ensure_grad(*xn);
            for (int64_t i = 0; i < b; ++i) {
                float* dst = g.data() + (i * steps + t) * d;
                const float* src = yn->grad.data() + i * d;
                for (int64_t j = 0; j < d; ++j) {
                    dst[j] += src[j];
                }
            }
        });
    }
    return y;
}

Tensor stack_axis1(const std::vector<Tensor>& rows) {
    require(!rows.empty(), "bad_shape", "stack_axis1: no tensors");
    const int64_t b = rows[0].dim(0);
    const int64_t d = rows[0].dim(1);
    const int64_t steps = static_cast<int64_t>(rows.size());
    for (const Tensor& r : rows) {
        require(r.rank() == 2 && r.dim(0) == b && r.dim(1) == d, "shape_mismatch",
                "stack_axis1: all tensors must be [B,D]");
    }
    Tensor y = Tensor::zeros({b, steps, d});
    auto yd = y.data();
    for (int64_t t = 0; t < steps; ++t) {
        auto rd = rows[static_cast<size_t>(t)].data();
        for (int64_t i = 0; i < b; ++i) {
            std::memcpy(yd.data() + (i * steps + t) * d, rd.data() + i * d,
                        static_cast<size_t>(d) * 4);
        }
    }
    bool any_grad = false;
    for (const Tensor& r : rows) {
        any_grad = any_grad || r.requires_grad();
    }
    if (Tape::active() && any_grad) {
        y.set_requires_grad(true);
        std::vector<std::shared_ptr<TensorNode>> nodes;
        nodes.reserve(rows.size());
        for (const Tensor& r : rows) {
            nodes.push_back(r.node());
        }
        Tape::active()->record([nodes = std::move(nodes), yn = y.node(), b, steps, d] {
            if (yn->grad.empty()) {
                return;
            }
            for (int64_t t = 0; t < steps; ++t) {
                auto& node = *nodes[static_cast<size_t>(t)];
                if (!node.requires_grad) {
                    continue;
                }
                auto& g = ensure_grad(node);
                for (int64_t i = 0; i < b; ++i) {
                    const float* src = yn->grad.data() + (i * steps + t) * d;
                    float* dst = g.data() + i * d;
                    for (int64_t j = 0; j < d; ++j) {
                        dst[j] += src[j];
                    }
                }
            }
        });
    }
    return y;
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (float v : x.data()) {
        acc += v;
    }
    Tensor y = Tensor::from_data({1}, {static_cast<float>(acc)});
    if (recording({&x})) {
        y.set_requires_grad(true);
        Tape::active()->record([xn = x.node(), yn = y.node()] {
            if (yn->grad.empty()) {
                return;
            }
            auto& g = ensure_grad(*xn);
            const float dy = yn->grad[0];
            for (size_t i = 0; i < g.size(); ++i) {
                g[i] += dy;
            }
        });
    }
    return y;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2, "bad_shape", "matmul expects 2-D tensors");
    require(a.dim(1) == b.dim(0), "shape_mismatch",
            "matmul: inner extents disagree: " + shape_string(a.shape()) + " * " +
                shape_string(b.shape()));
    a.check_finite("matmul lhs");
    b.check_finite("matmul rhs");
    const int64_t m = a.dim(0);
    const int64_t k = a.dim(1);
    const int64_t n = b.dim(1);
    Tensor y = Tensor::zeros({m, n});
    kernels::gemm_nn(a.data().data(), b.data().data(), y.data().data(), m, k, n, false);
    if (recording({&a, &b})) {
        y.set_requires_grad(true);
        Tape::active()->record([an = a.node(), bn = b.node(), yn = y.node(), m, k, n] {
            if (yn->grad.empty()) {
                return;
            }
            if (an->requires_grad) {
                ensure_grad(*an);
                kernels::gemm_nt(yn->grad.data(), bn->data.data(), an->grad.data(), m, n, k, true);
            }
            if (bn->requires_grad) {
                ensure_grad(*bn);
                kernels::gemm_tn(an->data.data(), yn->grad.data(), bn->grad.data(), k, m, n, true);
            }
        });
    }
    return y;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2, "bad_shape", "matmul_nt expects 2-D tensors");
    require(a.dim(1) == b.dim(1), "shape_mismatch",
            "matmul_nt: contraction extents disagree: " + shape_string(a.shape()) + " * " +
                shape_string(b.shape()) + "^T");
    a.check_finite("matmul_nt lhs");
    b.check_finite("matmul_nt rhs");
    const int64_t m = a.dim(0);
    const int64_t k = a.dim(1);
    const int64_t n = b.dim(0);
    Tensor y = Tensor::zeros({m, n});
    kernels::gemm_nt(a.data().data(), b.data().data(), y.data().data(), m, k, n, false);
    if (recording({&a, &b})) {
        y.set_requires_grad(true);
        Tape::active()->record([an = a.node(), bn = b.node(), yn = y.node(), m, k, n] {
            if (yn->grad.empty()) {
                return;
            }
            if (an->requires_grad) {
                ensure_grad(*an);
                kernels::gemm_nn(yn->grad.data(), bn->data.data(), an->grad.data(), m, n, k, true);
            }
            if (bn->requires_grad) {
                ensure_grad(*bn);
                kernels::gemm_tn(yn->grad.data(), an->data.data(), bn->grad.data(), n, m, k, true);
            }
        });
    }
    return y;
}

Tensor fully_connected(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require(weight.rank() == 2, "bad_shape", "fully_connected: weight must be [D_out,D_in]");
    const int64_t d_in = x.dim(x.rank() - 1);
    require(weight.dim(1) == d_in, "shape_mismatch",
            "fully_connected: input dim " + std::to_string(d_in) + " vs weight " +
                shape_string(weight.shape()));
    const int64_t d_out = weight.dim(0);
    const int64_t rows = leading_rows(x);
    Tensor flat = x.rank() == 2 ? x : reshape(x, {rows, d_in});
    Tensor y = add_bias(matmul_nt(flat, weight), bias);
    if (x.rank() == 2) {
        return y;
    }
    std::vector<int64_t> out_shape = x.shape();
    out_shape.back() = d_out;
    return reshape(y, out_shape);
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, int64_t pad_h, int64_t pad_w,
              const std::optional<Tensor>& mask) {
    require(x.rank() == 3 || x.rank() == 4, "bad_shape", "conv2d expects [C,H,W] or [B,C,H,W]");
    require(kernel.rank() == 4, "bad_shape", "conv2d kernel must be [C_out,C_in,kH,kW]");
    const bool batched = x.rank() == 4;

    kernels::Conv2dDims d;
    d.batch = batched ? x.dim(0) : 1;
    d.c_in = x.dim(batched ? 1 : 0);
    d.height = x.dim(batched ? 2 : 1);
    d.width = x.dim(batched ? 3 : 2);
    d.c_out = kernel.dim(0);
    d.k_h = kernel.dim(2);
    d.k_w = kernel.dim(3);
    d.pad_h = pad_h;
    d.pad_w = pad_w;

    require(kernel.dim(1) == d.c_in, "shape_mismatch",
            "conv2d: kernel input channels " + std::to_string(kernel.dim(1)) +
                " != input channels " + std::to_string(d.c_in));
    require(d.k_h <= d.height + 2 * pad_h && d.k_w <= d.width + 2 * pad_w, "kernel_too_large",
            "conv2d: kernel exceeds padded input");
    require(d.k_h == 2 * pad_h + 1 && d.k_w == 2 * pad_w + 1, "bad_padding",
            "conv2d: padding must preserve spatial extents (odd kernel, pad=(k-1)/2)");
    if (mask) {
        require(mask->rank() == 2 && mask->dim(0) == d.k_h && mask->dim(1) == d.k_w,
                "mask_shape", "conv2d: mask must match kernel spatial shape");
    }
    x.check_finite("conv2d input");
    kernel.check_finite("conv2d kernel");

    // Masked taps are multiplied away once, up front; the same effective
    // kernel serves forward and the input gradient.
    std::vector<float> keff(kernel.data().begin(), kernel.data().end());
    std::vector<float> mask_data;
    if (mask) {
        mask_data.assign(mask->data().begin(), mask->data().end());
        const int64_t ksz = d.k_h * d.k_w;
        for (int64_t co = 0; co < d.c_out; ++co) {
            for (int64_t ci = 0; ci < d.c_in; ++ci) {
                float* kk = keff.data() + (co * d.c_in + ci) * ksz;
                for (int64_t i = 0; i < ksz; ++i) {
                    kk[i] *= mask_data[static_cast<size_t>(i)];
                }
            }
        }
    }

    std::vector<int64_t> out_shape =
        batched ? std::vector<int64_t>{d.batch, d.c_out, d.height, d.width}
                : std::vector<int64_t>{d.c_out, d.height, d.width};
    Tensor y = Tensor::zeros(out_shape);
    kernels::conv2d_forward(x.data().data(), keff.data(),
                            mask ? mask_data.data() : nullptr, y.data().data(), d);

    if (recording({&x, &kernel})) {
        y.set_requires_grad(true);
        Tape::active()->record([xn = x.node(), kn = kernel.node(), yn = y.node(), d,
                                keff = std::move(keff), mask_data = std::move(mask_data)] {
            if (yn->grad.empty()) {
                return;
            }
            const float* mptr = mask_data.empty() ? nullptr : mask_data.data();
            if (xn->requires_grad) {
                ensure_grad(*xn);
                kernels::conv2d_backward_input(yn->grad.data(), keff.data(), mptr,
                                               xn->grad.data(), d, true);
            }
            if (kn->requires_grad) {
                ensure_grad(*kn);
                kernels::conv2d_backward_kernel(xn->data.data(), yn->grad.data(), mptr,
                                                kn->grad.data(), d, true);
            }
        });
    }
    return y;
}

Tensor embedding(const Tensor& table, const IdMatrix& ids) {
    require(table.rank() == 2, "bad_shape", "embedding table must be [V,D]");
    const int64_t v = table.dim(0);
    const int64_t d = table.dim(1);
    for (int32_t id : ids.values) {
        require(id >= 0 && id < v, "bad_token_id",
                "embedding: token id " + std::to_string(id) + " outside vocabulary of size " +
                    std::to_string(v));
    }
    Tensor y = Tensor::zeros({ids.rows, ids.cols, d});
    auto yd = y.data();
    auto td = table.data();
    for (int64_t i = 0; i < ids.rows * ids.cols; ++i) {
        const int32_t id = ids.values[static_cast<size_t>(i)];
        std::memcpy(yd.data() + i * d, td.data() + static_cast<int64_t>(id) * d,
                    static_cast<size_t>(d) * 4);
    }
    if (recording({&table})) {
        y.set_requires_grad(true);
        Tape::active()->record([tn = table.node(), yn = y.node(), ids, d] {
            if (yn->grad.empty()) {
                return;
            }
            auto& g = ensure_grad(*tn);
            for (int64_t i = 0; i < ids.rows * ids.cols; ++i) {
                const int32_t id = ids.values[static_cast<size_t>(i)];
                float* dst = g.data() + static_cast<int64_t>(id) * d;
                const float* src = yn->grad.data() + i * d;
                for (int64_t j = 0; j < d; ++j) {
                    dst[j] += src[j];
                }
            }
        });
    }
    return y;
}

Tensor weighted_sum_positions(const Tensor& features, const Tensor& weights) {
    require(features.rank() == 4, "bad_shape", "weighted_sum_positions: features must be [B,S,T,D]");
    require(weights.rank() == 3, "bad_shape", "weighted_sum_positions: weights must be [B,S,T]");
    const int64_t b = features.dim(0);
    const int64_t s = features.dim(1);
    const int64_t t = features.dim(2);
    const int64_t d = features.dim(3);
    require(weights.dim(0) == b && weights.dim(1) == s && weights.dim(2) == t, "shape_mismatch",
            "weighted_sum_positions: weight grid does not match features");
    Tensor y = Tensor::zeros({b, s, d});
    auto yd = y.data();
    auto fd = features.data();
    auto wd = weights.data();
    for (int64_t bs = 0; bs < b * s; ++bs) {
        const float* fbase = fd.data() + bs * t * d;
        const float* wbase = wd.data() + bs * t;
        float* out = yd.data() + bs * d;
        for (int64_t j = 0; j < t; ++j) {
            const float w = wbase[j];
            const float* row = fbase + j * d;
            for (int64_t q = 0; q < d; ++q) {
                out[q] += w * row[q];
            }
        }
    }
    if (recording({&features, &weights})) {
        y.set_requires_grad(true);
        Tape::active()->record([fn = features.node(), wn = weights.node(), yn = y.node(), b, s, t, d] {
            if (yn->grad.empty()) {
                return;
            }
            for (int64_t bs = 0; bs < b * s; ++bs) {
                const float* dy = yn->grad.data() + bs * d;
                if (fn->requires_grad) {
                    auto& g = ensure_grad(*fn);
                    for (int64_t j = 0; j < t; ++j) {
                        const float w = wn->data[static_cast<size_t>(bs * t + j)];
                        float* dst = g.data() + (bs * t + j) * d;
                        for (int64_t q = 0; q < d; ++q) {
                            dst[q] += w * dy[q];
                        }
                    }
                }
                if (wn->requires_grad) {
                    auto& g = ensure_grad(*wn);
                    for (int64_t j = 0; j < t; ++j) {
                        const float* row = fn->data.data() + (bs * t + j) * d;
                        double acc = 0.0;
                        for (int64_t q = 0; q < d; ++q) {
                            acc += static_cast<double>(row[q]) * dy[q];
                        }
                        g[static_cast<size_t>(bs * t + j)] += static_cast<float>(acc);
                    }
                }
            }
        });
    }
    return y;
}

Tensor masked_cross_entropy(const Tensor& logits, const IdMatrix& targets, const IdMatrix& mask) {
    require(logits.rank() == 3, "bad_shape", "masked_cross_entropy: logits must be [B,S,V]");
    const int64_t b = logits.dim(0);
    const int64_t s = logits.dim(1);
    const int64_t v = logits.dim(2);
    require(targets.rows == b && targets.cols == s, "shape_mismatch",
            "masked_cross_entropy: target grid must be [B,S]");
    require(mask.rows == b && mask.cols == s, "shape_mismatch",
            "masked_cross_entropy: mask grid must be [B,S]");
    logits.check_finite("masked_cross_entropy logits");

    int64_t count = 0;
    for (int32_t m : mask.values) {
        count += m != 0 ? 1 : 0;
    }
    require(count > 0, "empty_mask", "masked_cross_entropy: no supervised positions");

    // Softmax probabilities are kept for the backward step.
    std::vector<float> probs(static_cast<size_t>(b * s * v));
    double total = 0.0;
    auto ld = logits.data();
    for (int64_t r = 0; r < b * s; ++r) {
        const float* in = ld.data() + r * v;
        float* p = probs.data() + r * v;
        float mx = in[0];
        for (int64_t j = 1; j < v; ++j) {
            mx = std::max(mx, in[j]);
        }
        double denom = 0.0;
        for (int64_t j = 0; j < v; ++j) {
            const float e = std::exp(in[j] - mx);
            p[j] = e;
            denom += e;
        }
        const float inv = static_cast<float>(1.0 / denom);
        for (int64_t j = 0; j < v; ++j) {
            p[j] *= inv;
        }
        if (mask.values[static_cast<size_t>(r)] != 0) {
            const int32_t tgt = targets.values[static_cast<size_t>(r)];
            require(tgt >= 0 && tgt < v, "bad_token_id",
                    "masked_cross_entropy: target id outside vocabulary");
            total += std::log(denom) + mx - in[tgt];
        }
    }
    const float loss = static_cast<float>(total / static_cast<double>(count));
    Tensor y = Tensor::from_data({1}, {loss});
    if (recording({&logits})) {
        y.set_requires_grad(true);
        Tape::active()->record([ln = logits.node(), yn = y.node(), probs = std::move(probs),
                                targets, mask, b, s, v, count] {
            if (yn->grad.empty()) {
                return;
            }
            auto& g = ensure_grad(*ln);
            const float scale = yn->grad[0] / static_cast<float>(count);
            for (int64_t r = 0; r < b * s; ++r) {
                if (mask.values[static_cast<size_t>(r)] == 0) {
                    continue;
                }
                const int32_t tgt = targets.values[static_cast<size_t>(r)];
                const float* p = probs.data() + r * v;
                float* dst = g.data() + r * v;
                for (int64_t j = 0; j < v; ++j) {
                    const float onehot = j == tgt ? 1.0f : 0.0f;
                    dst[j] += scale * (p[j] - onehot);
                }
            }
        });
    }
    return y;
}

} // namespace ops

BatchNorm2d::BatchNorm2d(int64_t channels)
    : gamma(Tensor::full({channels}, 1.0f, true)),
      beta(Tensor::zeros({channels}, true)),
      running_mean(static_cast<size_t>(channels), 0.0f),
      running_var(static_cast<size_t>(channels), 1.0f) {}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
    require(x.rank() == 4, "bad_shape", "batch_norm expects [B,C,H,W]");
    const int64_t b = x.dim(0);
    const int64_t c = x.dim(1);
    const int64_t h = x.dim(2);
    const int64_t w = x.dim(3);
    require(c == channels(), "shape_mismatch",
            "batch_norm: channel count " + std::to_string(c) + " != " + std::to_string(channels()));
    x.check_finite("batch_norm input");

    std::vector<float> mean(static_cast<size_t>(c));
    std::vector<float> var(static_cast<size_t>(c));
    if (mode == Mode::Train) {
        kernels::bn2d_stats(x.data().data(), b, c, h, w, mean.data(), var.data());
        for (int64_t i = 0; i < c; ++i) {
            running_mean[static_cast<size_t>(i)] =
                (1.0f - momentum) * running_mean[static_cast<size_t>(i)] + momentum * mean[static_cast<size_t>(i)];
            running_var[static_cast<size_t>(i)] =
                (1.0f - momentum) * running_var[static_cast<size_t>(i)] + momentum * var[static_cast<size_t>(i)];
        }
        initialized = true;
    } else {
        require(initialized, "bn_uninitialized",
                "batch_norm: eval mode before running statistics were initialized");
        mean = running_mean;
        var = running_var;
    }

    std::vector<float> invstd(static_cast<size_t>(c));
    for (int64_t i = 0; i < c; ++i) {
        invstd[static_cast<size_t>(i)] =
            1.0f / std::sqrt(var[static_cast<size_t>(i)] + eps);
    }

    const bool rec = Tape::active() &&
                     (x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
    std::vector<float> xhat;
    if (rec) {
        xhat.resize(static_cast<size_t>(x.numel()));
    }
    Tensor y = Tensor::zeros(x.shape());
    kernels::bn2d_forward(x.data().data(), b, c, h, w, mean.data(), invstd.data(),
                          gamma.data().data(), beta.data().data(), y.data().data(),
                          rec ? xhat.data() : nullptr);
    if (rec) {
        y.set_requires_grad(true);
        const bool batch_stats = mode == Mode::Train;
        Tape::active()->record([xn = x.node(), gn = gamma.node(), bn = beta.node(),
                                yn = y.node(), xhat = std::move(xhat),
                                invstd = std::move(invstd), b, c, h, w, batch_stats] {
            if (yn->grad.empty()) {
                return;
            }
            std::vector<float> dx;
            std::vector<float> dgamma;
            std::vector<float> dbeta;
            if (xn->requires_grad) {
                dx.resize(xn->data.size());
            }
            if (gn->requires_grad) {
                dgamma.resize(static_cast<size_t>(c));
            }
            if (bn->requires_grad) {
                dbeta.resize(static_cast<size_t>(c));
            }
            kernels::bn2d_backward(yn->grad.data(), xhat.data(), b, c, h, w, gn->data.data(),
                                   invstd.data(), batch_stats,
                                   dx.empty() ? nullptr : dx.data(),
                                   dgamma.empty() ? nullptr : dgamma.data(),
                                   dbeta.empty() ? nullptr : dbeta.data());
            if (!dx.empty()) {
                auto& g = ensure_grad(*xn);
                for (size_t i = 0; i < g.size(); ++i) {
                    g[i] += dx[i];
                }
            }
            if (!dgamma.empty()) {
                auto& g = ensure_grad(*gn);
                for (size_t i = 0; i < g.size(); ++i) {
                    g[i] += dgamma[i];
                }
            }
            if (!dbeta.empty()) {
                auto& g = ensure_grad(*bn);
                for (size_t i = 0; i < g.size(); ++i) {
                    g[i] += dbeta[i];
                }
            }
        });
    }
    return y;
}

} // namespace mmcap
