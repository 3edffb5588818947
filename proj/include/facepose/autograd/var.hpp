#pragma once

#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "facepose/errors.hpp"

namespace facepose::ag {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + ")";
}

template <class S>
struct Node {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::vector<S>& ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), S(0));
        return grad;
    }
};

/// Reference-counted handle to a tensor in a dynamically recorded graph.
/// Operations on tensors that require grad record a backward closure; leaves
/// created with `parameter` accumulate gradients across `backward` calls.
template <class S>
class Var {
public:
    using Scalar = S;

    Var() = default;
    explicit Var(std::shared_ptr<Node<S>> node) : node_(std::move(node)) {}

    static Var constant(Shape shape, std::vector<S> value) { return make_leaf(std::move(shape), std::move(value), false); }
    static Var parameter(Shape shape, std::vector<S> value) { return make_leaf(std::move(shape), std::move(value), true); }
    static Var zeros(Shape shape, bool requires_grad = false) {
        auto n = numel(shape);
        return make_leaf(std::move(shape), std::vector<S>(n, S(0)), requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }
    const std::vector<S>& value() const { return node_->value; }
    std::vector<S>& mutable_value() { return node_->value; }
    const std::vector<S>& grad() const { return node_->grad; }
    std::vector<S>& mutable_grad() { return node_->ensure_grad(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Node<S>* node() const { return node_.get(); }
    const std::shared_ptr<Node<S>>& ptr() const { return node_; }
    S item() const {
        if (size() != 1) fail(ErrorCode::ShapeMismatch, "item() on non-scalar " + shape_str(shape()));
        return node_->value[0];
    }

    void zero_grad() {
        if (node_) std::fill(node_->grad.begin(), node_->grad.end(), S(0));
    }

    /// Reverse-mode sweep seeded with d(this)/d(this) = 1 (scalar outputs only).
    void backward() const {
        if (size() != 1) fail(ErrorCode::ShapeMismatch, "backward() needs a scalar output");
        if (!requires_grad()) return;
        std::vector<Node<S>*> order;
        std::unordered_set<Node<S>*> seen;
        std::vector<std::pair<Node<S>*, bool>> stack{{node_.get(), false}};
        while (!stack.empty()) {
            auto [n, expanded] = stack.back();
            stack.pop_back();
            if (expanded) {
                order.push_back(n);
                continue;
            }
            if (!seen.insert(n).second) continue;
            stack.push_back({n, true});
            for (const auto& p : n->parents) {
                if (p->requires_grad && !seen.count(p.get())) stack.push_back({p.get(), false});
            }
        }
        node_->ensure_grad()[0] += S(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<S>* n = *it;
            if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
        }
    }

private:
    static Var make_leaf(Shape shape, std::vector<S> value, bool requires_grad) {
        if (numel(shape) != value.size()) {
            fail(ErrorCode::ShapeMismatch, "value count " + std::to_string(value.size()) + " does not match " + shape_str(shape));
        }
        auto n = std::make_shared<Node<S>>();
        n->shape = std::move(shape);
        n->value = std::move(value);
        n->requires_grad = requires_grad;
        return Var(std::move(n));
    }

    std::shared_ptr<Node<S>> node_;
};

namespace detail {
inline bool& grad_enabled() {
    thread_local bool enabled = true;
    return enabled;
}
} // namespace detail

/// Disables graph recording on this thread for its lifetime (inference).
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_enabled()) { detail::grad_enabled() = false; }
    ~NoGradGuard() { detail::grad_enabled() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Builds an op result. `backward(out)` runs only when some input requires
/// grad; it reads `out.grad` and accumulates into the inputs' grads.
template <class S, class Backward>
Var<S> make_result(Shape shape, std::vector<S> value, std::initializer_list<Var<S>> inputs, Backward&& backward) {
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool any = false;
    if (detail::grad_enabled())
        for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
        n->requires_grad = true;
        for (const auto& in : inputs) {
            if (in.requires_grad()) n->parents.push_back(in.ptr());
        }
        n->backward_fn = std::forward<Backward>(backward);
    }
    return Var<S>(std::move(n));
}

/// Accumulation target for an input's gradient, or nullptr when it needs none.
template <class S>
S* grad_of(const Var<S>& v) {
    return v.requires_grad() ? v.node()->ensure_grad().data() : nullptr;
}

} // namespace facepose::ag
