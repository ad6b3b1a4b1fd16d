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

#include "aerotx/nn/window.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "aerotx/error.hpp"

namespace aerotx::nn {

namespace {

// Region label along one axis of the rolled grid: the last window straddles the wrap.
std::size_t region(std::size_t pos, std::size_t padded, std::size_t win, std::size_t shift) {
    if (shift == 0) return 0;
    if (pos < padded - win) return 0;
    if (pos < padded - shift) return 1;
    return 2;
}

std::shared_ptr<const WindowPlan> build(std::size_t height, std::size_t width, std::size_t window, bool shifted) {
    auto plan = std::make_shared<WindowPlan>();
    plan->height = height;
    plan->width = width;
    plan->win_h = std::min(window, height);
    plan->win_w = std::min(window, width);
    plan->padded_h = (height + plan->win_h - 1) / plan->win_h * plan->win_h;
    plan->padded_w = (width + plan->win_w - 1) / plan->win_w * plan->win_w;
    plan->shift_h = (shifted && plan->padded_h > plan->win_h) ? plan->win_h / 2 : 0;
    plan->shift_w = (shifted && plan->padded_w > plan->win_w) ? plan->win_w / 2 : 0;

    const std::size_t wh = plan->win_h;
    const std::size_t ww = plan->win_w;
    const std::size_t nwh = plan->padded_h / wh;
    const std::size_t nww = plan->padded_w / ww;
    const std::size_t t = wh * ww;
    plan->windows = nwh * nww;
    plan->token.assign(plan->windows * t, -1);

    std::vector<std::size_t> labels(plan->windows * t, 0);
    bool any_mask = plan->padded_h != height || plan->padded_w != width;
    for (std::size_t a = 0; a < nwh; ++a) {
        for (std::size_t b = 0; b < nww; ++b) {
            const std::size_t win = a * nww + b;
            for (std::size_t r = 0; r < wh; ++r) {
                for (std::size_t c = 0; c < ww; ++c) {
                    const std::size_t rr = a * wh + r;  // position on the rolled grid
                    const std::size_t cc = b * ww + c;
                    const std::size_t src_r = (rr + plan->shift_h) % plan->padded_h;
                    const std::size_t src_c = (cc + plan->shift_w) % plan->padded_w;
                    const std::size_t slot = win * t + r * ww + c;
                    if (src_r < height && src_c < width)
                        plan->token[slot] = static_cast<std::int64_t>(src_r * width + src_c);
                    const std::size_t lr = region(rr, plan->padded_h, wh, plan->shift_h);
                    const std::size_t lc = region(cc, plan->padded_w, ww, plan->shift_w);
                    labels[slot] = lr * 3 + lc;
                    if (lr != 0 || lc != 0) any_mask = true;
                }
            }
        }
    }

    if (any_mask) {
        plan->allowed.assign(plan->windows * t * t, 0);
        for (std::size_t win = 0; win < plan->windows; ++win) {
            for (std::size_t i = 0; i < t; ++i) {
                for (std::size_t j = 0; j < t; ++j) {
                    const std::size_t si = win * t + i;
                    const std::size_t sj = win * t + j;
                    const bool ok = plan->token[sj] >= 0 && labels[si] == labels[sj];
                    plan->allowed[(win * t + i) * t + j] = ok ? 1 : 0;
                }
            }
        }
    }

    plan->relative_index.resize(t * t);
    const std::size_t span_w = 2 * ww - 1;
    for (std::size_t i = 0; i < t; ++i) {
        const std::size_t ri = i / ww, ci = i % ww;
        for (std::size_t j = 0; j < t; ++j) {
            const std::size_t rj = j / ww, cj = j % ww;
            const std::size_t dr = ri + wh - 1 - rj;
            const std::size_t dc = ci + ww - 1 - cj;
            plan->relative_index[i * t + j] = static_cast<std::uint32_t>(dr * span_w + dc);
        }
    }
    return plan;
}

}  // namespace

std::shared_ptr<const WindowPlan> WindowPlan::make(std::size_t height, std::size_t width, std::size_t window,
                                                   bool shifted) {
    if (height == 0 || width == 0 || window == 0) throw ConfigError("window plan: empty grid or window");
    static std::mutex mutex;
    static std::map<std::tuple<std::size_t, std::size_t, std::size_t, bool>, std::shared_ptr<const WindowPlan>>
        cache;
    const auto key = std::make_tuple(height, width, window, shifted);
    std::lock_guard lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto plan = build(height, width, window, shifted);
    cache.emplace(key, plan);
    return plan;
}

std::vector<double> log_relative_coordinates(std::size_t win_h, std::size_t win_w) {
    auto transform = [](double d) { return d == 0.0 ? 0.0 : std::copysign(std::log1p(std::abs(d)), d); };
    std::vector<double> out;
    out.reserve((2 * win_h - 1) * (2 * win_w - 1) * 2);
    const auto h = static_cast<long>(win_h);
    const auto w = static_cast<long>(win_w);
    for (long dr = -(h - 1); dr <= h - 1; ++dr) {
        for (long dc = -(w - 1); dc <= w - 1; ++dc) {
            out.push_back(transform(static_cast<double>(dr)));
            out.push_back(transform(static_cast<double>(dc)));
        }
    }
    return out;
}

}  // namespace aerotx::nn
