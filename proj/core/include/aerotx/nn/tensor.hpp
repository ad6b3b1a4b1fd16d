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

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "aerotx/error.hpp"

namespace aerotx::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape);

/// Dense row-major tensor.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(shape_size(shape), fill) {}
    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != shape_size(shape))
            throw ConfigError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                              shape_string(shape));
    }

    std::size_t size() const noexcept { return data.size(); }
    /// Last dimension.
    std::size_t cols() const noexcept { return shape.empty() ? 1 : shape.back(); }
    /// Product of all leading dimensions.
    std::size_t rows() const noexcept { return cols() == 0 ? 0 : size() / cols(); }

    T* ptr() noexcept { return data.data(); }
    const T* ptr() const noexcept { return data.data(); }
};

inline std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Named trainable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    void zero_grad() {
        if (grad.shape != value.shape) grad = Tensor<T>(value.shape);
        std::fill(grad.data.begin(), grad.data.end(), T(0));
    }
};

}  // namespace aerotx::nn
