// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over a linear tape.
//
// Every differentiable op appends one node holding its output value and a
// closure that maps the node's output gradient to its inputs' gradients.
// Nodes are appended in evaluation order, so a reverse sweep over the tape is
// a valid topological order for the backward pass.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dmsr/tensor.hpp"

namespace dmsr {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

template <typename T>
class Tape {
public:
    // Called with the tape and the id of the node being differentiated.
    using BackwardFn = std::function<void(Tape&, int)>;

    struct Node {
        Tensor<T> value;
        Tensor<T> grad;  // allocated lazily
        bool requires_grad = false;
        const char* op = "";
        std::string name;  // leaves only
        BackwardFn backward;
    };

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return grad_enabled_; }

    Var constant(Tensor<T> value, std::string name = {}) {
        return push(std::move(value), false, "constant", std::move(name), nullptr);
    }

    Var leaf(Tensor<T> value, std::string name, bool requires_grad = true) {
        return push(std::move(value), requires_grad && grad_enabled_, "leaf", std::move(name), nullptr);
    }

    // Records an op output. The node requires grad iff any input does.
    Var record(const char* op, Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn) {
        bool rg = false;
        if (grad_enabled_) {
            for (Var v : inputs) rg = rg || (v.valid() && nodes_[v.id].requires_grad);
        }
        return push(std::move(value), rg, op, {}, rg ? std::move(fn) : BackwardFn{});
    }
    Var record(const char* op, Tensor<T> value, const std::vector<Var>& inputs, BackwardFn fn) {
        bool rg = false;
        if (grad_enabled_) {
            for (Var v : inputs) rg = rg || (v.valid() && nodes_[v.id].requires_grad);
        }
        return push(std::move(value), rg, op, {}, rg ? std::move(fn) : BackwardFn{});
    }

    const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
    const Shape& shape(Var v) const { return nodes_.at(v.id).value.shape(); }
    bool requires_grad(Var v) const { return v.valid() && nodes_.at(v.id).requires_grad; }

    // Gradient buffer of `v`, zero-allocated on first access.
    Tensor<T>& grad(Var v) {
        Node& n = nodes_.at(v.id);
        if (n.grad.numel() != n.value.numel()) n.grad = Tensor<T>(n.value.shape());
        return n.grad;
    }
    bool has_grad(Var v) const {
        const Node& n = nodes_.at(v.id);
        return n.grad.numel() == n.value.numel() && !n.value.empty();
    }

    // Seeds d(root)/d(root) = 1 for a single-element root and runs the reverse sweep.
    void backward(Var root) {
        Node& r = nodes_.at(root.id);
        if (r.value.numel() != 1) throw ShapeError("backward root must be a scalar");
        if (!r.requires_grad) return;
        grad(root)[0] = T(1);
        for (int id = root.id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
            n.backward(*this, id);
            if (id != root.id) n.grad = Tensor<T>();
        }
    }

    std::size_t size() const { return nodes_.size(); }
    const Node& node(int id) const { return nodes_.at(id); }
    const Tensor<T>& out_grad(int id) const { return nodes_[id].grad; }

private:
    Var push(Tensor<T> value, bool rg, const char* op, std::string name, BackwardFn fn) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = rg;
        n.op = op;
        n.name = std::move(name);
        n.backward = std::move(fn);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    bool grad_enabled_;
    std::vector<Node> nodes_;
};

}  // namespace dmsr
