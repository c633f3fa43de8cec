#pragma once

#include "mmcap/common.hpp"

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace mmcap {

// Row-major float32 array with an optional gradient buffer. Tensor is a
// cheap handle; copies share the underlying storage.
struct TensorNode {
    std::vector<int64_t> shape;
    std::vector<float> data;
    std::vector<float> grad; // allocated on first accumulation
    bool requires_grad = false;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<int64_t> shape, float value, bool requires_grad = false);
    static Tensor from_data(std::vector<int64_t> shape, std::vector<float> data,
                            bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int64_t>& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }

    std::span<float> data() { return node_->data; }
    std::span<const float> data() const { return node_->data; }
    float scalar() const;

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    // Grad buffer, zero-initialized on first use.
    std::span<float> grad();
    bool grad_allocated() const { return node_ && !node_->grad.empty(); }
    void zero_grad();
    void accumulate_grad(std::span<const float> g);

    void check_finite(const char* what) const;

    const std::shared_ptr<TensorNode>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<TensorNode> node_;
};

// Ordered record of one forward pass. Ops append their backward closures in
// execution order; backward() replays them in reverse. A tape may be
// consumed exactly once.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::function<void()> backward_step) {
        steps_.push_back(std::move(backward_step));
    }

    size_t size() const { return steps_.size(); }

    // Seeds grad(loss) = 1 and runs every recorded step in reverse order.
    void backward(Tensor loss);

    static Tape* active();

private:
    friend class TapeScope;
    std::vector<std::function<void()>> steps_;
    bool consumed_ = false;
};

// Makes a tape the recording target for the current thread. Without an
// active scope ops run forward-only (inference mode).
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

} // namespace mmcap
