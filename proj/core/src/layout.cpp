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

#include "aerotx/nn/layout.hpp"

namespace aerotx::nn {

Index patch_index(std::size_t batch, std::size_t channels, std::size_t height, std::size_t width, std::size_t ph,
                  std::size_t pw) {
    if (ph == 0 || pw == 0 || height % ph != 0 || width % pw != 0)
        throw ConfigError("patch_index: grid not divisible by patch size");
    const std::size_t gh = height / ph, gw = width / pw;
    auto idx = std::make_shared<std::vector<std::size_t>>();
    idx->reserve(batch * channels * height * width);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < gh; ++i)
            for (std::size_t j = 0; j < gw; ++j)
                for (std::size_t c = 0; c < channels; ++c)
                    for (std::size_t dy = 0; dy < ph; ++dy)
                        for (std::size_t dx = 0; dx < pw; ++dx)
                            idx->push_back(((b * channels + c) * height + i * ph + dy) * width + j * pw + dx);
    return idx;
}

Index unpatch_index(std::size_t batch, std::size_t channels, std::size_t grid_h, std::size_t grid_w, std::size_t ph,
                    std::size_t pw) {
    const std::size_t height = grid_h * ph, width = grid_w * pw, cols = channels * ph * pw;
    auto idx = std::make_shared<std::vector<std::size_t>>(batch * channels * height * width);
    std::size_t o = 0;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x) {
                    const std::size_t row = (b * grid_h + y / ph) * grid_w + x / pw;
                    (*idx)[o++] = row * cols + (c * ph + y % ph) * pw + x % pw;
                }
    return idx;
}

Index unshuffle_tokens_index(std::size_t batch, std::size_t height, std::size_t width, std::size_t channels,
                             std::size_t r) {
    if (r == 0 || height % r != 0 || width % r != 0)
        throw ConfigError("pixel_unshuffle: token grid " + std::to_string(height) + "x" + std::to_string(width) +
                          " not divisible by " + std::to_string(r));
    const std::size_t oh = height / r, ow = width / r;
    auto idx = std::make_shared<std::vector<std::size_t>>();
    idx->reserve(batch * height * width * channels);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j)
                for (std::size_t c = 0; c < channels; ++c)
                    for (std::size_t dy = 0; dy < r; ++dy)
                        for (std::size_t dx = 0; dx < r; ++dx)
                            idx->push_back(((b * height + i * r + dy) * width + j * r + dx) * channels + c);
    return idx;
}

Index shuffle_tokens_index(std::size_t batch, std::size_t height, std::size_t width, std::size_t channels,
                           std::size_t r) {
    const std::size_t oh = height * r, ow = width * r, in_c = channels * r * r;
    auto idx = std::make_shared<std::vector<std::size_t>>(batch * oh * ow * channels);
    std::size_t o = 0;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x)
                for (std::size_t c = 0; c < channels; ++c) {
                    const std::size_t src_row = (b * height + y / r) * width + x / r;
                    (*idx)[o++] = src_row * in_c + (c * r + y % r) * r + x % r;
                }
    return idx;
}

}  // namespace aerotx::nn
