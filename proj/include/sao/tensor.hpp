#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sao {

using Real = double;
using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::vector<Real>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), Real(0));
        return grad;
    }
};

}  // namespace detail

// Dense row-major tensor with reverse-mode differentiation. Copies share the
// underlying node; use clone() for a deep copy.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, Real value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false);
    static Tensor scalar(Real value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t dim(int axis) const;
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

    std::span<const Real> data() const { return node_->value; }
    // Direct write access. Only meaningful for leaves (parameters, inputs).
    std::span<Real> mutable_data() { return node_->value; }
    Real item() const;
    Real at(int64_t flat_index) const { return node_->value[static_cast<size_t>(flat_index)]; }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on);
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    std::span<const Real> grad() const { return node_->grad; }
    std::span<Real> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad();

    // Seeds d(this)/d(this) = 1 and propagates to every reachable leaf.
    void backward() const;

    Tensor detach() const;
    Tensor clone() const;

    // Internal: used by op implementations.
    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Disables graph construction on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

namespace detail {

// Creates an output node. When any input requires grad (and grad mode is on)
// the node records its parents and `backward` is attached.
Tensor make_result(Shape shape, std::vector<Real> value, std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward);
Tensor make_result(Shape shape, std::vector<Real> value, const std::vector<Tensor>& inputs,
                   std::function<void(Node&)> backward);

}  // namespace detail

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace sao
