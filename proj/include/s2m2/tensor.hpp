// Dense float64 tensors with reverse-mode differentiation.
//
// Every op records its inputs and a backprop closure on the produced node;
// backward() walks the implied graph once, in reverse topological order.
// Tensors are immutable values after construction except for two sanctioned
// mutations: optimizer updates on leaf parameters and running-stat buffers.

#ifndef S2M2_TENSOR_HPP
#define S2M2_TENSOR_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2m2 {

class shape_error : public std::runtime_error {
public:
    explicit shape_error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

struct Node {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily during backward
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;  // accumulates this->grad into parents

    std::vector<double>& grad_buf() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

inline long long shape_numel(const std::vector<int>& shape) {
    long long n = 1;
    for (int d : shape) {
        if (d <= 0) throw shape_error("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

class Tensor {
public:
    Tensor() = default;

    Tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad = false) {
        if (shape_numel(shape) != (long long)data.size())
            throw shape_error("shape/data size mismatch: shape wants " +
                              std::to_string(shape_numel(shape)) + " values, got " +
                              std::to_string(data.size()));
        for (double v : data)
            if (!std::isfinite(v))
                throw std::invalid_argument("non-finite value rejected at tensor construction");
        node_ = std::make_shared<detail::Node>();
        node_->shape = std::move(shape);
        node_->value = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        long long n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<double>((size_t)n, 0.0), requires_grad);
    }

    static Tensor full(std::vector<int> shape, double v, bool requires_grad = false) {
        long long n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<double>((size_t)n, v), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor({1}, {v}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape.at((size_t)i); }
    int ndim() const { return (int)node_->shape.size(); }
    long long size() const { return (long long)node_->value.size(); }

    const std::vector<double>& value() const { return node_->value; }
    // In-place access for leaf updates (optimizer steps, buffer refresh).
    std::vector<double>& mutable_value() {
        if (!node_->is_leaf) throw std::logic_error("mutable access is restricted to leaf tensors");
        return node_->value;
    }

    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf; }
    void set_requires_grad(bool rg) {
        if (!node_->is_leaf) throw std::logic_error("requires_grad may only be toggled on leaves");
        node_->requires_grad = rg;
    }

    const std::vector<double>& grad() const {
        if (node_->grad.size() != node_->value.size())
            node_->grad.assign(node_->value.size(), 0.0);
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

    double item() const {
        if (size() != 1) throw shape_error("item() requires a scalar tensor");
        return node_->value[0];
    }

    double at(std::initializer_list<int> idx) const {
        size_t flat = 0;
        size_t i = 0;
        for (int v : idx) {
            flat = flat * (size_t)node_->shape[i] + (size_t)v;
            ++i;
        }
        return node_->value[flat];
    }

    std::shared_ptr<detail::Node> node() const { return node_; }

    static Tensor from_node(std::shared_ptr<detail::Node> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<detail::Node> node_;
};

// Creates the result node of an op. The backprop closure is attached by the
// caller only when some input actually needs gradients; otherwise the node
// carries no parent links and the upstream graph can be freed eagerly.
inline Tensor make_op_result(std::vector<int> shape, std::vector<double> value,
                             std::vector<Tensor> inputs,
                             const std::function<void(detail::Node&)>& attach) {
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->is_leaf = false;
    bool needs = false;
    for (const auto& t : inputs)
        if (t.requires_grad()) needs = true;
    n->requires_grad = needs;
    if (needs) {
        n->parents.reserve(inputs.size());
        for (const auto& t : inputs) n->parents.push_back(t.node());
        attach(*n);
    }
    return Tensor::from_node(n);
}

// Reverse-mode sweep from a scalar loss. Visits each node exactly once.
// With release_graph=true the interior values and grads are dropped as soon
// as they can no longer be read, which bounds peak memory during training.
void backward(const Tensor& loss, bool release_graph = false);

}  // namespace s2m2

#endif
