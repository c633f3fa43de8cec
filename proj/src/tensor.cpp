#include "mmcap/tensor.hpp"

#include <cmath>
#include <sstream>

namespace mmcap {

std::string shape_string(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            os << "x";
        }
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
    return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(std::vector<int64_t> shape, float value, bool requires_grad) {
    for (int64_t e : shape) {
        require(e > 0, "bad_shape", "tensor extents must be positive, got " + shape_string(shape));
    }
    auto node = std::make_shared<TensorNode>();
    node->data.assign(static_cast<size_t>(numel_of(shape)), value);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from_data(std::vector<int64_t> shape, std::vector<float> data,
                         bool requires_grad) {
    require(numel_of(shape) == static_cast<int64_t>(data.size()), "bad_shape",
            "data length " + std::to_string(data.size()) + " does not match shape " +
                shape_string(shape));
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

float Tensor::scalar() const {
    require(numel() == 1, "not_scalar", "scalar() on tensor of shape " + shape_string(shape()));
    return node_->data[0];
}

std::span<float> Tensor::grad() {
    if (node_->grad.empty()) {
        node_->grad.assign(node_->data.size(), 0.0f);
    }
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) {
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
    }
}

void Tensor::accumulate_grad(std::span<const float> g) {
    require(g.size() == node_->data.size(), "grad_shape",
            "gradient length mismatch for tensor " + shape_string(shape()));
    auto dst = grad();
    for (size_t i = 0; i < g.size(); ++i) {
        dst[i] += g[i];
    }
}

void Tensor::check_finite(const char* what) const {
    for (float v : node_->data) {
        if (!std::isfinite(v)) {
            raise("non_finite", std::string(what) + " contains a non-finite value");
        }
    }
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::backward(Tensor loss) {
    require(loss.defined() && loss.numel() == 1, "not_scalar",
            "backward() requires a scalar loss");
    require(!consumed_, "tape_consumed",
            "backward() called twice on the same tape; run a new forward pass first");
    consumed_ = true;
    loss.grad()[0] += 1.0f;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
        (*it)();
    }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

} // namespace mmcap
