#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vigil {

class Tape;

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {
struct TensorImpl {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated iff requires_grad
    bool requires_grad = false;
    Tape* tape = nullptr;
};
}  // namespace detail

// Dense row-major tensor of doubles. A Tensor is a cheap shared handle;
// gradients accumulate into the shared buffer when a Tape records the op.
class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Shape shape, std::vector<double> data);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor scalar(double v);

    bool defined() const { return p_ != nullptr; }
    const Shape& shape() const { return p_->shape; }
    int rank() const { return static_cast<int>(p_->shape.size()); }
    int dim(int axis) const { return p_->shape[static_cast<size_t>(axis)]; }
    int64_t size() const { return static_cast<int64_t>(p_->value.size()); }

    std::span<const double> value() const { return p_->value; }
    // Direct writes are only sound on leaves; recorded ops capture the buffer.
    std::span<double> raw_value() { return p_->value; }
    std::span<const double> grad() const { return p_->grad; }
    std::span<double> raw_grad() { return p_->grad; }

    bool requires_grad() const { return p_ && p_->requires_grad; }
    Tape* tape() const { return p_ ? p_->tape : nullptr; }
    double item() const;

    void zero_grad();

    const std::shared_ptr<detail::TensorImpl>& handle() const { return p_; }
    static Tensor from_impl(std::shared_ptr<detail::TensorImpl> p);

private:
    std::shared_ptr<detail::TensorImpl> p_;
};

// Reverse-mode tape: ops append backward closures in execution order;
// backward() replays them once, in reverse.
class Tape {
public:
    // Leaf with gradient tracking that persists across reset().
    Tensor parameter(Shape shape, std::vector<double> init);
    // Leaf with gradient tracking, e.g. an input under a gradient check.
    Tensor watch(Shape shape, std::vector<double> data);

    void backward(const Tensor& loss);
    void reset() { nodes_.clear(); }
    size_t node_count() const { return nodes_.size(); }

    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

private:
    std::vector<std::function<void()>> nodes_;
};

// ---- core ops ----------------------------------------------------------
// Elementwise ops accept either equal shapes or a second operand whose
// shape is a trailing suffix of the first (including a true scalar);
// gradients for the small side reduce-sum over the leading axes. Anything
// fancier must go through an explicit reshape.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// [*, M, K] x [K, N] (shared rhs, leading axes collapsed) or
// [B, M, K] x [B, K, N] (batched).
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a, const std::vector<int>& perm);
Tensor reshape(const Tensor& a, Shape new_shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);

Tensor softmax(const Tensor& a, int axis);
Tensor layer_norm(const Tensor& a, int axis, double eps = 1e-5);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// 1-D linear resize along `axis` (endpoints map to endpoints).
Tensor linear_interp_resize(const Tensor& a, int axis, int new_len);

Tensor reduce_mean(const Tensor& a);
Tensor reduce_sum(const Tensor& a);
Tensor mse_loss(const Tensor& a, const Tensor& b);

// ---- optimizer ---------------------------------------------------------

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    int64_t step = 0;
    std::vector<std::vector<double>> m, v;
};

// One Adam update over `params` using their accumulated grads. Skips the
// whole update (returns false) when any gradient is non-finite.
bool adam_step(std::vector<Tensor>& params, AdamState& state, const AdamConfig& cfg, double lr);

inline double decayed_lr(double lr0, double gamma, int epoch) {
    double lr = lr0;
    for (int e = 0; e < epoch; ++e) lr *= gamma;
    return lr;
}

}  // namespace vigil
