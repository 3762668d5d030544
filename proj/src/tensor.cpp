#include "cred/tensor.hpp"

#include "cred/mac_counter.hpp"

#include <algorithm>
#include <unordered_set>
#include <utility>

namespace cred {

namespace {
thread_local bool t_grad_enabled = true;
thread_local MacCounter* t_counter = nullptr;
}  // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> data(numel(shape), value);
    return from(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    for (auto e : shape) {
        if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (data.size() != numel(shape)) {
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const {
    if (!node_) throw ValueError("undefined tensor");
    return node_->shape;
}

std::size_t Tensor::extent(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::size() const { return node_ ? node_->data.size() : 0; }

std::span<const double> Tensor::data() const {
    if (!node_) throw ValueError("undefined tensor");
    return node_->data;
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw ValueError("tensor has no gradient");
    return node_->grad;
}

std::span<double> Tensor::mutable_data() {
    if (!is_leaf()) throw ValueError("mutable_data() is only available on leaf tensors");
    return node_->data;
}

void Tensor::set_requires_grad(bool on) {
    if (!is_leaf()) throw ValueError("set_requires_grad() is only available on leaf tensors");
    node_->requires_grad = on;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

bool Tensor::is_leaf() const { return node_ && node_->parents.empty(); }

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

void Tensor::backward() const {
    if (size() != 1) throw ShapeError("backward() requires a scalar output, got " + shape_str(shape()));
    if (!node_->requires_grad) throw ValueError("backward() on a tensor that does not require grad");

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (auto* n : order) n->grad.assign(n->data.size(), 0.0);
    node_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward) n->backward(*n);
    }
    // Interior grads are scratch space; only leaves keep theirs.
    for (auto* n : order) {
        if (!n->parents.empty()) {
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() { return t_grad_enabled; }

MacCounter::MacCounter() : outer_(t_counter) { t_counter = this; }
MacCounter::~MacCounter() { t_counter = outer_; }

void MacCounter::record(std::uint64_t macs) {
    for (MacCounter* c = t_counter; c != nullptr; c = c->outer_) c->count_ += macs;
}

}  // namespace cred
