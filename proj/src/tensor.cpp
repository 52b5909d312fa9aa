#include "sao/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace sao {

namespace {
thread_local bool g_grad_enabled = true;
}

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
    auto node = std::make_shared<detail::Node>();
    node->value.assign(static_cast<size_t>(shape_numel(shape)), value);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<Real> values, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
        throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(Real value) { return from({}, {value}); }

int64_t Tensor::dim(int axis) const {
    const auto& s = node_->shape;
    if (axis < 0) axis += static_cast<int>(s.size());
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw ShapeError("axis out of range for shape " + shape_str(s));
    return s[static_cast<size_t>(axis)];
}

Real Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }

void Tensor::zero_grad() {
    if (node_) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
}

void Tensor::backward() const {
    if (!node_->requires_grad) throw std::logic_error("backward() on a tensor that does not require grad");
    // Iterative post-order DFS gives a topological order of the graph.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node* p = n->parents[next++].get();
            if (p && p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    auto& g = node_->ensure_grad();
    std::fill(g.begin(), g.end(), Real(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
    // Interior grads are not needed once propagated.
    for (detail::Node* n : order)
        if (n->backward_fn && n != node_.get()) std::vector<Real>().swap(n->grad);
}

Tensor Tensor::detach() const {
    auto node = std::make_shared<detail::Node>();
    node->shape = node_->shape;
    node->value = node_->value;
    return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
    Tensor t = detach();
    t.set_requires_grad(node_->requires_grad && !node_->backward_fn);
    return t;
}

namespace detail {

namespace {
template <typename Range>
Tensor make_result_impl(Shape shape, std::vector<Real> value, const Range& inputs,
                        std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    if (g_grad_enabled) {
        bool any = false;
        for (const Tensor* t : inputs) any = any || t->requires_grad();
        if (any) {
            node->requires_grad = true;
            for (const Tensor* t : inputs) node->parents.push_back(t->node());
            node->backward_fn = std::move(backward);
        }
    }
    return Tensor(std::move(node));
}
}  // namespace

Tensor make_result(Shape shape, std::vector<Real> value, std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward) {
    return make_result_impl(std::move(shape), std::move(value), inputs, std::move(backward));
}

Tensor make_result(Shape shape, std::vector<Real> value, const std::vector<Tensor>& inputs,
                   std::function<void(Node&)> backward) {
    std::vector<const Tensor*> ptrs;
    ptrs.reserve(inputs.size());
    for (const auto& t : inputs) ptrs.push_back(&t);
    return make_result_impl(std::move(shape), std::move(value), ptrs, std::move(backward));
}

}  // namespace detail
}  // namespace sao
