// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode automatic differentiation over dense tensors.
//
// A Graph records every operation of one forward pass as a node holding its
// value and a closure that propagates the node's gradient into its inputs.
// Graph::backward walks the nodes in reverse creation order, which is a
// valid topological order by construction.

#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include "vaerepa/tensor.hpp"

namespace vaerepa::ad {

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
};

/// Named, ordered parameter collection. References returned by add/get stay
/// valid for the lifetime of the store.
template <typename T>
class ParamStore {
public:
    Parameter<T>& add(const std::string& name, Tensor<T> value) {
        require(!index_.count(name), ErrorKind::Config, "duplicate parameter `{}`", name);
        Shape s = value.shape();
        index_[name] = params_.size();
        params_.push_back(Parameter<T>{name, std::move(value), Tensor<T>(std::move(s))});
        return params_.back();
    }
    Parameter<T>& get(const std::string& name) {
        const auto it = index_.find(name);
        require(it != index_.end(), ErrorKind::Config, "unknown parameter `{}`", name);
        return params_[it->second];
    }
    const Parameter<T>& get(const std::string& name) const {
        const auto it = index_.find(name);
        require(it != index_.end(), ErrorKind::Config, "unknown parameter `{}`", name);
        return params_[it->second];
    }
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::deque<Parameter<T>>& all() { return params_; }
    const std::deque<Parameter<T>>& all() const { return params_; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }
    void zero_grad() {
        for (auto& p : params_) p.grad.fill(T{0});
    }

private:
    std::deque<Parameter<T>> params_;
    std::map<std::string, std::size_t> index_;
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

template <typename T>
class Graph;

/// Resolves parameter names to graph leaves, either trainable (mutable
/// store) or frozen (const store).
template <typename T>
class Binder {
public:
    Binder(Graph<T>& g, ParamStore<T>& store, bool trainable = true) : g_(g), mut_(&store), trainable_(trainable) {}
    Binder(Graph<T>& g, const ParamStore<T>& store) : g_(g), const_(&store) {}

    Var operator()(const std::string& name) const;
    Graph<T>& graph() const { return g_; }

private:
    Graph<T>& g_;
    ParamStore<T>* mut_ = nullptr;
    const ParamStore<T>* const_ = nullptr;
    bool trainable_ = false;
};

template <typename T>
class Graph {
public:
    using Backward = std::function<void(Graph&, int self)>;

    /// With `record_grad` false no closures are kept (inference mode).
    explicit Graph(bool record_grad = true) : record_grad_(record_grad) {}

    Var constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }
    /// Read-only leaf referencing `t`, which must outlive the graph.
    Var constant_ref(const Tensor<T>& t) { return push_external(&t, false); }

    /// Leaf bound to a parameter; its value is referenced, not copied, so the
    /// parameter must outlive the graph and stay unmodified until backward.
    Var param(Parameter<T>& p, bool trainable = true) {
        Var v = push_external(&p.value, record_grad_ && trainable);
        if (nodes_[v.id].needs_grad) nodes_[v.id].param = &p;
        return v;
    }

    /// Read-only leaf referencing `p` (no gradient).
    Var frozen(const Parameter<T>& p) { return push_external(&p.value, false); }

    /// Adds a node computed from `inputs`. The closure runs only when the
    /// node received gradient and at least one input needs one.
    Var record(Tensor<T> value, std::initializer_list<Var> inputs, Backward backward) {
        bool needs = false;
        for (Var in : inputs) needs = needs || (in.valid() && nodes_[in.id].needs_grad);
        return push(std::move(value), record_grad_ && needs, needs ? std::move(backward) : nullptr);
    }

    const Tensor<T>& value(Var v) const { return nodes_.at(v.id).get(); }
    const Shape& shape(Var v) const { return value(v).shape(); }
    T scalar(Var v) const {
        const auto& t = value(v);
        require(t.size() == 1, ErrorKind::Shape, "scalar(): node has shape {}", shape_str(t.shape()));
        return t[0];
    }

    bool needs_grad(Var v) const { return v.valid() && nodes_[v.id].needs_grad; }

    /// Gradient buffer of a node, zero-allocated on first access.
    std::vector<T>& grad(Var v) { return grad_of(v.id); }
    std::vector<T>& grad_of(int id) {
        auto& n = nodes_[id];
        if (n.grad.empty()) n.grad.assign(n.get().size(), T{0});
        return n.grad;
    }
    bool has_grad(int id) const { return !nodes_[id].grad.empty(); }

    /// Seeds d(loss)/d(loss) = 1 and accumulates into Parameter::grad.
    void backward(Var loss) {
        require(value(loss).size() == 1, ErrorKind::Shape, "backward() needs a scalar loss");
        if (!nodes_[loss.id].needs_grad) return;
        grad_of(loss.id)[0] = T{1};
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (n.grad.empty()) continue;
            if (n.backward) n.backward(*this, id);
            if (n.param) {
                T* dst = n.param->grad.data();
                for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i];
            }
        }
    }

    std::size_t size() const { return nodes_.size(); }
    bool recording() const { return record_grad_; }

private:
    struct Node {
        const Tensor<T>& get() const { return external ? *external : value; }

        Tensor<T> value;
        const Tensor<T>* external = nullptr;
        std::vector<T> grad;
        bool needs_grad = false;
        Parameter<T>* param = nullptr;
        Backward backward;
    };

    Var push(Tensor<T> value, bool needs, Backward bw) {
        nodes_.push_back(Node{std::move(value), nullptr, {}, needs, nullptr, needs ? std::move(bw) : nullptr});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    Var push_external(const Tensor<T>* ext, bool needs) {
        nodes_.push_back(Node{Tensor<T>(), ext, {}, needs, nullptr, nullptr});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    bool record_grad_;
    std::deque<Node> nodes_;
};

template <typename T>
Var Binder<T>::operator()(const std::string& name) const {
    if (mut_) return g_.param(mut_->get(name), trainable_);
    return g_.frozen(const_->get(name));
}

}  // namespace vaerepa::ad
