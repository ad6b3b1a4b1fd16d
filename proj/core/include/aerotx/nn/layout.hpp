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

// Index maps for the pure rearrangements (patching, pixel (un)shuffle). Each returns, for
// every element of the output in row-major order, the flat position of its source element.

#include <cstddef>
#include <memory>
#include <vector>

#include "aerotx/nn/ops.hpp"

namespace aerotx::nn {

using Index = std::shared_ptr<const std::vector<std::size_t>>;

/// Image [B, C, H, W] to patch rows [B * (H/ph) * (W/pw), C * ph * pw].
/// Row order is grid order; column order is (c, dy, dx).
Index patch_index(std::size_t batch, std::size_t channels, std::size_t height, std::size_t width, std::size_t ph,
                  std::size_t pw);

/// Patch rows [B * Hp * Wp, C * ph * pw] back to the image [B, C, Hp * ph, Wp * pw].
Index unpatch_index(std::size_t batch, std::size_t channels, std::size_t grid_h, std::size_t grid_w, std::size_t ph,
                    std::size_t pw);

/// Tokens [B, H, W, C] to [B, H/r, W/r, C * r * r], channel order (c, dy, dx).
Index unshuffle_tokens_index(std::size_t batch, std::size_t height, std::size_t width, std::size_t channels,
                             std::size_t r);

/// Tokens [B, H, W, C * r * r] to [B, H * r, W * r, C]; inverse of unshuffle_tokens_index.
Index shuffle_tokens_index(std::size_t batch, std::size_t height, std::size_t width, std::size_t channels,
                           std::size_t r);

/// [C, H, W] -> [C r², H/r, W/r].
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t r) {
    if (x.shape.size() != 3) throw ConfigError("pixel_unshuffle: expected [C, H, W], got " + shape_string(x.shape));
    const std::size_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
    if (r == 0 || h % r != 0 || w % r != 0) throw ConfigError("pixel_unshuffle: H and W must be divisible by r");
    Tensor<T> y({c * r * r, h / r, w / r});
    std::size_t o = 0;
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t dy = 0; dy < r; ++dy)
            for (std::size_t dx = 0; dx < r; ++dx)
                for (std::size_t i = 0; i < h / r; ++i)
                    for (std::size_t j = 0; j < w / r; ++j) y.data[o++] = x.data[(ch * h + i * r + dy) * w + j * r + dx];
    return y;
}

/// [C r², H, W] -> [C, H r, W r].
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t r) {
    if (x.shape.size() != 3 || r == 0 || x.shape[0] % (r * r) != 0)
        throw ConfigError("pixel_shuffle: expected [C r^2, H, W], got " + shape_string(x.shape));
    const std::size_t c = x.shape[0] / (r * r), h = x.shape[1], w = x.shape[2];
    Tensor<T> y({c, h * r, w * r});
    std::size_t o = 0;
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t dy = 0; dy < r; ++dy)
            for (std::size_t dx = 0; dx < r; ++dx)
                for (std::size_t i = 0; i < h; ++i)
                    for (std::size_t j = 0; j < w; ++j) y.data[(ch * h * r + i * r + dy) * w * r + j * r + dx] = x.data[o++];
    return y;
}

/// Shared affine map over non-overlapping patches: image [B, C, H, W] -> tokens [B * Hp * Wp, C0].
template <typename T>
Var patch_embed(Tape<T>& tape, Var image, Var weight, Var bias, std::size_t ph, std::size_t pw) {
    const Shape& s = tape.shape(image);
    if (s.size() != 4) throw ConfigError("patch_embed: expected [B, C, H, W], got " + shape_string(s));
    if (ph == 0 || pw == 0 || s[2] % ph != 0 || s[3] % pw != 0)
        throw ConfigError("patch_embed: " + shape_string(s) + " is not divisible by the patch size");
    const std::size_t rows = s[0] * (s[2] / ph) * (s[3] / pw);
    Var patches = gather(tape, image, patch_index(s[0], s[1], s[2], s[3], ph, pw), Shape{rows, s[1] * ph * pw});
    return linear(tape, patches, weight, bias);
}

/// Relative-position bias table [(2 wh - 1)(2 ww - 1), heads] from a 2-layer ReLU MLP over
/// log-spaced offsets.
template <typename T>
Var relative_bias(Tape<T>& tape, Var w1, Var b1, Var w2, Var b2, std::size_t win_h, std::size_t win_w) {
    const auto coords = log_relative_coordinates(win_h, win_w);
    std::vector<T> cast(coords.begin(), coords.end());
    Var in = tape.constant(Tensor<T>({coords.size() / 2, 2}, std::move(cast)));
    return linear(tape, relu(tape, linear(tape, in, w1, b1)), w2, b2);
}

}  // namespace aerotx::nn
