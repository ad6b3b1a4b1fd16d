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
#include <cstdint>
#include <memory>
#include <vector>

namespace aerotx::nn {

/// Window partition of an H x W token grid for (shifted) windowed attention.
///
/// The window is clamped to the grid along each axis. Grids that are not a multiple of the
/// window are zero-padded; padded slots never act as keys and produce no output. When
/// shifted, the padded grid is cyclically rolled by half a window before partitioning and
/// tokens that were not neighbours before the roll are masked from each other.
struct WindowPlan {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t win_h = 0;
    std::size_t win_w = 0;
    std::size_t shift_h = 0;
    std::size_t shift_w = 0;
    std::size_t padded_h = 0;
    std::size_t padded_w = 0;
    std::size_t windows = 0;

    /// [windows, T]: token index in the grid (row * width + col), or -1 for padding.
    std::vector<std::int64_t> token;
    /// [windows, T, T]: 1 where query i may attend to key j. Empty when nothing is masked.
    std::vector<std::uint8_t> allowed;
    /// [T, T]: row of the relative-bias table for the pair (i, j).
    std::vector<std::uint32_t> relative_index;

    std::size_t tokens_per_window() const noexcept { return win_h * win_w; }
    std::size_t bias_rows() const noexcept { return (2 * win_h - 1) * (2 * win_w - 1); }
    bool masked() const noexcept { return !allowed.empty(); }

    static std::shared_ptr<const WindowPlan> make(std::size_t height, std::size_t width, std::size_t window,
                                                  bool shifted);
};

/// Log-spaced relative offsets sign(d) * log(1 + |d|) for every (dr, dc) of a
/// win_h x win_w window; row-major [(2 win_h - 1) * (2 win_w - 1), 2].
std::vector<double> log_relative_coordinates(std::size_t win_h, std::size_t win_w);

}  // namespace aerotx::nn
