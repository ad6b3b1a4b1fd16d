/*
 * Copyright (c) 2026, The aerotx Authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "aerotx/nn/tensor.hpp"

namespace aerotx::nn {

/// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const noexcept { return id != static_cast<std::size_t>(-1); }
};

/// Reverse-mode tape. Every op appends a node holding its value and a closure that
/// pushes the node's gradient into its inputs; backward() replays closures in reverse.
///
/// A tape built with grad disabled records values only, which is what inference uses.
template <typename T>
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor<T>&)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const noexcept { return grad_enabled_; }

    Var constant(Tensor<T> value) {
        nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
        return Var{nodes_.size() - 1};
    }

    /// Leaf bound to a parameter; its gradient is added to `p.grad` during backward().
    Var parameter(Parameter<T>& p) {
        const bool needs = grad_enabled_ && p.trainable;
        nodes_.push_back(Node{p.value, {}, {}, needs ? &p : nullptr, needs});
        return Var{nodes_.size() - 1};
    }

    /// Read-only binding: the value enters as a constant.
    Var parameter(const Parameter<T>& p) { return constant(p.value); }

    Var record(Tensor<T> value, bool requires_grad, Backward backward) {
        const bool needs = grad_enabled_ && requires_grad;
        nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, nullptr, needs});
        return Var{nodes_.size() - 1};
    }

    const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
    const Shape& shape(Var v) const { return nodes_.at(v.id).value.shape; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

    /// Gradient buffer of `v`, zero-allocated on first access.
    Tensor<T>& grad(Var v) {
        Node& n = nodes_.at(v.id);
        if (n.grad.shape != n.value.shape) n.grad = Tensor<T>(n.value.shape);
        return n.grad;
    }

    /// Gradient accumulated so far, or an empty tensor if none reached `v`.
    const Tensor<T>& grad_or_empty(Var v) const { return nodes_.at(v.id).grad; }

    void backward(Var loss) {
        if (nodes_.at(loss.id).value.size() != 1) throw ConfigError("backward: loss must be a scalar");
        if (!grad_enabled_) throw ConfigError("backward: tape was recorded without gradients");
        grad(loss).data[0] = T(1);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.requires_grad || n.grad.data.empty()) continue;
            if (n.param != nullptr) {
                if (n.param->grad.shape != n.param->value.shape) n.param->zero_grad();
                auto& dst = n.param->grad.data;
                for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad.data[k];
            } else if (n.backward) {
                // nodes_ is not resized during backward, so `n.grad` stays put.
                n.backward(*this, n.grad);
            }
        }
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        Backward backward;
        Parameter<T>* param = nullptr;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
};

}  // namespace aerotx::nn
