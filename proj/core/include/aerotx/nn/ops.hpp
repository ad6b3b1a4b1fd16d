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

// Differentiable operators on a Tape. Every op takes 2-D views: "rows" is the product of
// the leading dimensions and "cols" the last one. Batched ops receive per-sample vectors
// as [B, C] tensors and apply them to consecutive blocks of rows.

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "aerotx/error.hpp"
#include "aerotx/nn/tape.hpp"
#include "aerotx/nn/window.hpp"

namespace aerotx::nn {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t) {
    return ConstMatMap<T>(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
MatMap<T> as_matrix(Tensor<T>& t) {
    return MatMap<T>(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

inline Shape with_cols(Shape s, std::size_t cols) {
    if (s.empty()) return {cols};
    s.back() = cols;
    return s;
}

inline void require(bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
}

}  // namespace detail

/// y = x Wᵀ (+ b). x: [..., K], W: [M, K], b: [M].
template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, std::optional<Var> b = std::nullopt) {
    const auto& xv = tape.value(x);
    const auto& wv = tape.value(w);
    detail::require(wv.shape.size() == 2 && wv.shape[1] == xv.cols(), "linear: weight shape does not match input");
    const std::size_t m = wv.shape[0];
    Tensor<T> y(detail::with_cols(xv.shape, m));
    auto ym = detail::as_matrix(y);
    ym.noalias() = detail::as_matrix(xv) * detail::as_matrix(wv).transpose();
    if (b) {
        const auto& bv = tape.value(*b);
        detail::require(bv.size() == m, "linear: bias shape does not match");
        ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bv.ptr(), static_cast<Eigen::Index>(m));
    }
    const bool req = tape.requires_grad(x) || tape.requires_grad(w) || (b && tape.requires_grad(*b));
    return tape.record(std::move(y), req, [x, w, b](Tape<T>& t, const Tensor<T>& g) {
        const auto gm = detail::as_matrix(g);
        if (t.requires_grad(x)) detail::as_matrix(t.grad(x)).noalias() += gm * detail::as_matrix(t.value(w));
        if (t.requires_grad(w)) detail::as_matrix(t.grad(w)).noalias() += gm.transpose() * detail::as_matrix(t.value(x));
        if (b && t.requires_grad(*b)) {
            auto& gb = t.grad(*b);
            Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb.ptr(), static_cast<Eigen::Index>(gb.size())) +=
                gm.colwise().sum();
        }
    });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
    const auto& av = tape.value(a);
    const auto& bv = tape.value(b);
    detail::require(av.size() == bv.size(), "add: size mismatch");
    Tensor<T> y(av.shape);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = av.data[i] + bv.data[i];
    return tape.record(std::move(y), tape.requires_grad(a) || tape.requires_grad(b),
                       [a, b](Tape<T>& t, const Tensor<T>& g) {
                           for (Var v : {a, b}) {
                               if (!t.requires_grad(v)) continue;
                               auto& gv = t.grad(v);
                               for (std::size_t i = 0; i < g.size(); ++i) gv.data[i] += g.data[i];
                           }
                       });
}

template <typename T>
Var sub(Tape<T>& tape, Var a, Var b) {
    const auto& av = tape.value(a);
    const auto& bv = tape.value(b);
    detail::require(av.size() == bv.size(), "sub: size mismatch");
    Tensor<T> y(av.shape);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = av.data[i] - bv.data[i];
    return tape.record(std::move(y), tape.requires_grad(a) || tape.requires_grad(b),
                       [a, b](Tape<T>& t, const Tensor<T>& g) {
                           if (t.requires_grad(a)) {
                               auto& ga = t.grad(a);
                               for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
                           }
                           if (t.requires_grad(b)) {
                               auto& gb = t.grad(b);
                               for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
                           }
                       });
}

template <typename T>
Var scale(Tape<T>& tape, Var a, T s) {
    const auto& av = tape.value(a);
    Tensor<T> y(av.shape);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = av.data[i] * s;
    return tape.record(std::move(y), tape.requires_grad(a), [a, s](Tape<T>& t, const Tensor<T>& g) {
        auto& ga = t.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * s;
    });
}

/// Same data under a new shape.
template <typename T>
Var reshape(Tape<T>& tape, Var a, Shape shape) {
    const auto& av = tape.value(a);
    detail::require(shape_size(shape) == av.size(), "reshape: size mismatch");
    Tensor<T> y(std::move(shape), av.data);
    return tape.record(std::move(y), tape.requires_grad(a), [a](Tape<T>& t, const Tensor<T>& g) {
        auto& ga = t.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    });
}

/// Row-wise layer normalization without affine parameters.
template <typename T>
Var layer_norm(Tape<T>& tape, Var x, T eps = T(1e-6)) {
    const auto& xv = tape.value(x);
    const std::size_t n = xv.rows();
    const std::size_t c = xv.cols();
    Tensor<T> y(xv.shape);
    std::vector<T> inv_std(n);
    for (std::size_t r = 0; r < n; ++r) {
        const T* xr = xv.ptr() + r * c;
        T mean = 0;
        for (std::size_t k = 0; k < c; ++k) mean += xr[k];
        mean /= static_cast<T>(c);
        T var = 0;
        for (std::size_t k = 0; k < c; ++k) var += (xr[k] - mean) * (xr[k] - mean);
        var /= static_cast<T>(c);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[r] = is;
        T* yr = y.ptr() + r * c;
        for (std::size_t k = 0; k < c; ++k) yr[k] = (xr[k] - mean) * is;
    }
    Var out{tape.size()};
    return tape.record(std::move(y), tape.requires_grad(x),
                       [x, out, inv_std = std::move(inv_std), n, c](Tape<T>& t, const Tensor<T>& g) {
                           const auto& yv = t.value(out);
                           auto& gx = t.grad(x);
                           for (std::size_t r = 0; r < n; ++r) {
                               const T* gr = g.ptr() + r * c;
                               const T* yr = yv.ptr() + r * c;
                               T mg = 0, mgy = 0;
                               for (std::size_t k = 0; k < c; ++k) {
                                   mg += gr[k];
                                   mgy += gr[k] * yr[k];
                               }
                               mg /= static_cast<T>(c);
                               mgy /= static_cast<T>(c);
                               T* dst = gx.ptr() + r * c;
                               for (std::size_t k = 0; k < c; ++k) dst[k] += inv_std[r] * (gr[k] - mg - yr[k] * mgy);
                           }
                       });
}

namespace detail {

template <typename T, typename F, typename D>
Var unary(Tape<T>& tape, Var x, F f, D df) {
    const auto& xv = tape.value(x);
    Tensor<T> y(xv.shape);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = f(xv.data[i]);
    return tape.record(std::move(y), tape.requires_grad(x), [x, df](Tape<T>& t, const Tensor<T>& g) {
        const auto& xin = t.value(x);
        auto& gx = t.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] * df(xin.data[i]);
    });
}

}  // namespace detail

/// Exact (erf) GELU.
template <typename T>
Var gelu(Tape<T>& tape, Var x) {
    constexpr T inv_sqrt2 = T(0.70710678118654752440);
    constexpr T inv_sqrt2pi = T(0.39894228040143267794);
    return detail::unary(
        tape, x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
        [](T v) { return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(T(-0.5) * v * v); });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
    return detail::unary(
        tape, x, [](T v) { return v > T(0) ? v : T(0); }, [](T v) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var silu(Tape<T>& tape, Var x) {
    return detail::unary(
        tape, x, [](T v) { return v / (T(1) + std::exp(-v)); },
        [](T v) {
            const T s = T(1) / (T(1) + std::exp(-v));
            return s * (T(1) + v * (T(1) - s));
        });
}

/// y = x ⊙ (1 + scale_b) + shift_b, with x: [B * R, C] and shift, scale: [B, C].
template <typename T>
Var modulate(Tape<T>& tape, Var x, Var shift, Var scale_v) {
    const auto& xv = tape.value(x);
    const auto& sh = tape.value(shift);
    const auto& sc = tape.value(scale_v);
    const std::size_t c = xv.cols();
    const std::size_t batch = sh.rows();
    detail::require(sh.cols() == c && sc.cols() == c && sc.rows() == batch && xv.rows() % batch == 0,
                    "modulate: shape mismatch");
    const std::size_t per = xv.rows() / batch;
    Tensor<T> y(xv.shape);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t r = 0; r < per; ++r) {
            const std::size_t row = (b * per + r) * c;
            for (std::size_t k = 0; k < c; ++k)
                y.data[row + k] = xv.data[row + k] * (T(1) + sc.data[b * c + k]) + sh.data[b * c + k];
        }
    }
    const bool req = tape.requires_grad(x) || tape.requires_grad(shift) || tape.requires_grad(scale_v);
    return tape.record(std::move(y), req, [x, shift, scale_v, batch, per, c](Tape<T>& t, const Tensor<T>& g) {
        const auto& xin = t.value(x);
        const auto& scv = t.value(scale_v);
        Tensor<T>* gx = t.requires_grad(x) ? &t.grad(x) : nullptr;
        Tensor<T>* gsh = t.requires_grad(shift) ? &t.grad(shift) : nullptr;
        Tensor<T>* gsc = t.requires_grad(scale_v) ? &t.grad(scale_v) : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t r = 0; r < per; ++r) {
                const std::size_t row = (b * per + r) * c;
                for (std::size_t k = 0; k < c; ++k) {
                    const T gv = g.data[row + k];
                    if (gx) gx->data[row + k] += gv * (T(1) + scv.data[b * c + k]);
                    if (gsh) gsh->data[b * c + k] += gv;
                    if (gsc) gsc->data[b * c + k] += gv * xin.data[row + k];
                }
            }
        }
    });
}

/// y = x + gate_b ⊙ h, with x, h: [B * R, C] and gate: [B, C].
template <typename T>
Var gated_add(Tape<T>& tape, Var x, Var gate, Var h) {
    const auto& xv = tape.value(x);
    const auto& gv = tape.value(gate);
    const auto& hv = tape.value(h);
    const std::size_t c = xv.cols();
    const std::size_t batch = gv.rows();
    detail::require(gv.cols() == c && hv.size() == xv.size() && xv.rows() % batch == 0, "gated_add: shape mismatch");
    const std::size_t per = xv.rows() / batch;
    Tensor<T> y(xv.shape);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t r = 0; r < per; ++r) {
            const std::size_t row = (b * per + r) * c;
            for (std::size_t k = 0; k < c; ++k) y.data[row + k] = xv.data[row + k] + gv.data[b * c + k] * hv.data[row + k];
        }
    }
    const bool req = tape.requires_grad(x) || tape.requires_grad(gate) || tape.requires_grad(h);
    return tape.record(std::move(y), req, [x, gate, h, batch, per, c](Tape<T>& t, const Tensor<T>& g) {
        const auto& gatev = t.value(gate);
        const auto& hin = t.value(h);
        Tensor<T>* gx = t.requires_grad(x) ? &t.grad(x) : nullptr;
        Tensor<T>* gg = t.requires_grad(gate) ? &t.grad(gate) : nullptr;
        Tensor<T>* gh = t.requires_grad(h) ? &t.grad(h) : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t r = 0; r < per; ++r) {
                const std::size_t row = (b * per + r) * c;
                for (std::size_t k = 0; k < c; ++k) {
                    const T gvv = g.data[row + k];
                    if (gx) gx->data[row + k] += gvv;
                    if (gg) gg->data[b * c + k] += gvv * hin.data[row + k];
                    if (gh) gh->data[row + k] += gvv * gatev.data[b * c + k];
                }
            }
        }
    });
}

/// Columns [start, start + count) of a 2-D view.
template <typename T>
Var slice_cols(Tape<T>& tape, Var x, std::size_t start, std::size_t count) {
    const auto& xv = tape.value(x);
    const std::size_t c = xv.cols();
    detail::require(start + count <= c, "slice_cols: out of range");
    const std::size_t n = xv.rows();
    Tensor<T> y(detail::with_cols(xv.shape, count));
    for (std::size_t r = 0; r < n; ++r)
        std::copy_n(xv.ptr() + r * c + start, count, y.ptr() + r * count);
    return tape.record(std::move(y), tape.requires_grad(x), [x, start, count, c, n](Tape<T>& t, const Tensor<T>& g) {
        auto& gx = t.grad(x);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = 0; k < count; ++k) gx.data[r * c + start + k] += g.data[r * count + k];
    });
}

template <typename T>
Var concat_cols(Tape<T>& tape, Var a, Var b) {
    const auto& av = tape.value(a);
    const auto& bv = tape.value(b);
    detail::require(av.rows() == bv.rows(), "concat_cols: row mismatch");
    const std::size_t n = av.rows(), ca = av.cols(), cb = bv.cols();
    Tensor<T> y(detail::with_cols(av.shape, ca + cb));
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(av.ptr() + r * ca, ca, y.ptr() + r * (ca + cb));
        std::copy_n(bv.ptr() + r * cb, cb, y.ptr() + r * (ca + cb) + ca);
    }
    return tape.record(std::move(y), tape.requires_grad(a) || tape.requires_grad(b),
                       [a, b, n, ca, cb](Tape<T>& t, const Tensor<T>& g) {
                           const std::size_t c = ca + cb;
                           if (t.requires_grad(a)) {
                               auto& ga = t.grad(a);
                               for (std::size_t r = 0; r < n; ++r)
                                   for (std::size_t k = 0; k < ca; ++k) ga.data[r * ca + k] += g.data[r * c + k];
                           }
                           if (t.requires_grad(b)) {
                               auto& gb = t.grad(b);
                               for (std::size_t r = 0; r < n; ++r)
                                   for (std::size_t k = 0; k < cb; ++k) gb.data[r * cb + k] += g.data[r * c + ca + k];
                           }
                       });
}

/// out.data[i] = x.data[index[i]]; the backward pass scatters.
template <typename T>
Var gather(Tape<T>& tape, Var x, std::shared_ptr<const std::vector<std::size_t>> index, Shape shape) {
    const auto& xv = tape.value(x);
    detail::require(index->size() == shape_size(shape), "gather: index length does not match output shape");
    Tensor<T> y(std::move(shape));
    const auto& idx = *index;
    for (std::size_t i = 0; i < idx.size(); ++i) y.data[i] = xv.data[idx[i]];
    return tape.record(std::move(y), tape.requires_grad(x), [x, index](Tape<T>& t, const Tensor<T>& g) {
        auto& gx = t.grad(x);
        const auto& ix = *index;
        for (std::size_t i = 0; i < ix.size(); ++i) gx.data[ix[i]] += g.data[i];
    });
}

/// Σ x².
template <typename T>
Var sum_squares(Tape<T>& tape, Var x) {
    const auto& xv = tape.value(x);
    T s = 0;
    for (T v : xv.data) s += v * v;
    return tape.record(Tensor<T>({1}, std::vector<T>{s}), tape.requires_grad(x), [x](Tape<T>& t, const Tensor<T>& g) {
        const auto& xin = t.value(x);
        auto& gx = t.grad(x);
        const T go = g.data[0];
        for (std::size_t i = 0; i < xin.size(); ++i) gx.data[i] += T(2) * go * xin.data[i];
    });
}

/// Per-channel affine map of x: [B, C, S] with constants scale[C] and shift[C].
template <typename T>
Var affine_channels(Tape<T>& tape, Var x, std::vector<T> scale_c, std::vector<T> shift_c) {
    const auto& xv = tape.value(x);
    detail::require(xv.shape.size() >= 2 && xv.shape[1] == scale_c.size() && shift_c.size() == scale_c.size(),
                    "affine_channels: channel mismatch");
    const std::size_t batch = xv.shape[0];
    const std::size_t ch = xv.shape[1];
    const std::size_t per = xv.size() / (batch * ch);
    Tensor<T> y(xv.shape);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t s = 0; s < per; ++s) {
                const std::size_t i = (b * ch + c) * per + s;
                y.data[i] = xv.data[i] * scale_c[c] + shift_c[c];
            }
    return tape.record(std::move(y), tape.requires_grad(x),
                       [x, scale_c = std::move(scale_c), batch, ch, per](Tape<T>& t, const Tensor<T>& g) {
                           auto& gx = t.grad(x);
                           for (std::size_t b = 0; b < batch; ++b)
                               for (std::size_t c = 0; c < ch; ++c)
                                   for (std::size_t s = 0; s < per; ++s) {
                                       const std::size_t i = (b * ch + c) * per + s;
                                       gx.data[i] += g.data[i] * scale_c[c];
                                   }
                       });
}

/// y[b, r] = Σ_f w[b, r, f] · x[b, f] with constant weights; x: [B, F], weights: [B, R, F].
template <typename T>
Var batched_dot(Tape<T>& tape, Var x, std::shared_ptr<const Tensor<T>> weights) {
    const auto& xv = tape.value(x);
    const auto& w = *weights;
    detail::require(w.shape.size() == 3 && w.shape[0] == xv.shape[0] && w.shape[2] * xv.shape[0] == xv.size(),
                    "batched_dot: weight shape mismatch");
    const std::size_t batch = w.shape[0], r = w.shape[1], f = w.shape[2];
    Tensor<T> y({batch, r});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t k = 0; k < r; ++k) {
            const T* wr = w.ptr() + (b * r + k) * f;
            const T* xr = xv.ptr() + b * f;
            T s = 0;
            for (std::size_t i = 0; i < f; ++i) s += wr[i] * xr[i];
            y.data[b * r + k] = s;
        }
    return tape.record(std::move(y), tape.requires_grad(x), [x, weights, batch, r, f](Tape<T>& t, const Tensor<T>& g) {
        auto& gx = t.grad(x);
        const auto& wt = *weights;
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t k = 0; k < r; ++k) {
                const T go = g.data[b * r + k];
                const T* wr = wt.ptr() + (b * r + k) * f;
                T* dst = gx.ptr() + b * f;
                for (std::size_t i = 0; i < f; ++i) dst[i] += go * wr[i];
            }
    });
}

/// Multi-head attention inside the windows of `plan`.
///
/// q, k, v: [B * H * W, C] token rows in grid order; bias: [plan.bias_rows(), heads].
/// Logits are q·k / sqrt(C / heads) + bias, masked per plan.
template <typename T>
Var window_attention(Tape<T>& tape, Var q, Var k, Var v, Var bias, std::shared_ptr<const WindowPlan> plan,
                     std::size_t heads) {
    const auto& qv = tape.value(q);
    const auto& kv = tape.value(k);
    const auto& vv = tape.value(v);
    const auto& bv = tape.value(bias);
    const std::size_t c = qv.cols();
    const std::size_t grid = plan->height * plan->width;
    if (heads == 0 || c % heads != 0) throw ConfigError("window_attention: channels not divisible by heads");
    detail::require(kv.size() == qv.size() && vv.size() == qv.size() && qv.rows() % grid == 0,
                    "window_attention: token tensors do not match the plan");
    detail::require(bv.rows() == plan->bias_rows() && bv.cols() == heads, "window_attention: bias table shape");
    const std::size_t batch = qv.rows() / grid;
    const std::size_t d = c / heads;
    const std::size_t tw = plan->tokens_per_window();
    const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(d));
    const bool need_grad = tape.grad_enabled() && (tape.requires_grad(q) || tape.requires_grad(k) ||
                                                   tape.requires_grad(v) || tape.requires_grad(bias));

    Tensor<T> y(qv.shape);
    auto probs = std::make_shared<std::vector<T>>();
    if (need_grad) probs->assign(batch * plan->windows * heads * tw * tw, T(0));
    std::vector<T> logits(tw * tw);

    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t base = b * grid;
        for (std::size_t win = 0; win < plan->windows; ++win) {
            const std::int64_t* tok = plan->token.data() + win * tw;
            const std::uint8_t* allow = plan->masked() ? plan->allowed.data() + win * tw * tw : nullptr;
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t off = h * d;
                for (std::size_t i = 0; i < tw; ++i) {
                    T* lrow = logits.data() + i * tw;
                    if (tok[i] < 0) continue;
                    const T* qi = qv.ptr() + (base + static_cast<std::size_t>(tok[i])) * c + off;
                    T mx = -std::numeric_limits<T>::infinity();
                    for (std::size_t j = 0; j < tw; ++j) {
                        if ((allow && !allow[i * tw + j]) || tok[j] < 0) {
                            lrow[j] = -std::numeric_limits<T>::infinity();
                            continue;
                        }
                        const T* kj = kv.ptr() + (base + static_cast<std::size_t>(tok[j])) * c + off;
                        T s = 0;
                        for (std::size_t e = 0; e < d; ++e) s += qi[e] * kj[e];
                        s = s * inv_sqrt_d + bv.data[plan->relative_index[i * tw + j] * heads + h];
                        lrow[j] = s;
                        mx = std::max(mx, s);
                    }
                    T denom = 0;
                    for (std::size_t j = 0; j < tw; ++j) {
                        const T e = std::isinf(lrow[j]) ? T(0) : std::exp(lrow[j] - mx);
                        lrow[j] = e;
                        denom += e;
                    }
                    T* yi = y.ptr() + (base + static_cast<std::size_t>(tok[i])) * c + off;
                    for (std::size_t j = 0; j < tw; ++j) {
                        const T p = lrow[j] / denom;
                        lrow[j] = p;
                        if (p == T(0)) continue;
                        const T* vj = vv.ptr() + (base + static_cast<std::size_t>(tok[j])) * c + off;
                        for (std::size_t e = 0; e < d; ++e) yi[e] += p * vj[e];
                    }
                    if (need_grad) {
                        T* dst = probs->data() + (((b * plan->windows + win) * heads + h) * tw + i) * tw;
                        std::copy_n(lrow, tw, dst);
                    }
                }
            }
        }
    }

    return tape.record(std::move(y), need_grad,
                       [q, k, v, bias, plan, heads, probs, batch, c, d, tw, grid, inv_sqrt_d](Tape<T>& t,
                                                                                          const Tensor<T>& g) {
                           const auto& qin = t.value(q);
                           const auto& kin = t.value(k);
                           const auto& vin = t.value(v);
                           Tensor<T>* gq = t.requires_grad(q) ? &t.grad(q) : nullptr;
                           Tensor<T>* gk = t.requires_grad(k) ? &t.grad(k) : nullptr;
                           Tensor<T>* gv = t.requires_grad(v) ? &t.grad(v) : nullptr;
                           Tensor<T>* gb = t.requires_grad(bias) ? &t.grad(bias) : nullptr;
                           std::vector<T> dp(tw);
                           for (std::size_t b = 0; b < batch; ++b) {
                               const std::size_t base = b * grid;
                               for (std::size_t win = 0; win < plan->windows; ++win) {
                                   const std::int64_t* tok = plan->token.data() + win * tw;
                                   for (std::size_t h = 0; h < heads; ++h) {
                                       const std::size_t off = h * d;
                                       for (std::size_t i = 0; i < tw; ++i) {
                                           if (tok[i] < 0) continue;
                                           const std::size_t ri = (base + static_cast<std::size_t>(tok[i])) * c + off;
                                           const T* p = probs->data() +
                                                        (((b * plan->windows + win) * heads + h) * tw + i) * tw;
                                           const T* gi = g.ptr() + ri;
                                           T dot_pp = 0;
                                           for (std::size_t j = 0; j < tw; ++j) {
                                               if (p[j] == T(0)) {
                                                   dp[j] = 0;
                                                   continue;
                                               }
                                               const std::size_t rj =
                                                   (base + static_cast<std::size_t>(tok[j])) * c + off;
                                               T s = 0;
                                               for (std::size_t e = 0; e < d; ++e) s += gi[e] * vin.data[rj + e];
                                               dp[j] = s;
                                               dot_pp += p[j] * s;
                                               if (gv)
                                                   for (std::size_t e = 0; e < d; ++e) gv->data[rj + e] += p[j] * gi[e];
                                           }
                                           for (std::size_t j = 0; j < tw; ++j) {
                                               if (p[j] == T(0)) continue;
                                               const T ds = p[j] * (dp[j] - dot_pp);
                                               const std::size_t rj =
                                                   (base + static_cast<std::size_t>(tok[j])) * c + off;
                                               if (gb) gb->data[plan->relative_index[i * tw + j] * heads + h] += ds;
                                               const T scaled = ds * inv_sqrt_d;
                                               if (gq)
                                                   for (std::size_t e = 0; e < d; ++e)
                                                       gq->data[ri + e] += scaled * kin.data[rj + e];
                                               if (gk)
                                                   for (std::size_t e = 0; e < d; ++e)
                                                       gk->data[rj + e] += scaled * qin.data[ri + e];
                                           }
                                       }
                                   }
                               }
                           }
                       });
}

/// Single learned query attending over the tokens of each sample.
/// k, v: [B * M, C]; query: [C]; output [B, C].
template <typename T>
Var attention_pool(Tape<T>& tape, Var k, Var v, Var query, std::size_t batch) {
    const auto& kv = tape.value(k);
    const auto& vv = tape.value(v);
    const auto& qv = tape.value(query);
    const std::size_t c = kv.cols();
    detail::require(qv.size() == c && vv.size() == kv.size() && kv.rows() % batch == 0, "attention_pool: shapes");
    const std::size_t m = kv.rows() / batch;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(c));
    auto probs = std::make_shared<std::vector<T>>(batch * m);
    Tensor<T> y({batch, c});
    for (std::size_t b = 0; b < batch; ++b) {
        T* p = probs->data() + b * m;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < m; ++j) {
            T s = 0;
            for (std::size_t e = 0; e < c; ++e) s += qv.data[e] * kv.data[(b * m + j) * c + e];
            p[j] = s * inv_sqrt;
            mx = std::max(mx, p[j]);
        }
        T denom = 0;
        for (std::size_t j = 0; j < m; ++j) {
            p[j] = std::exp(p[j] - mx);
            denom += p[j];
        }
        for (std::size_t j = 0; j < m; ++j) {
            p[j] /= denom;
            for (std::size_t e = 0; e < c; ++e) y.data[b * c + e] += p[j] * vv.data[(b * m + j) * c + e];
        }
    }
    const bool req = tape.requires_grad(k) || tape.requires_grad(v) || tape.requires_grad(query);
    return tape.record(std::move(y), req, [k, v, query, probs, batch, m, c, inv_sqrt](Tape<T>& t, const Tensor<T>& g) {
        const auto& kin = t.value(k);
        const auto& vin = t.value(v);
        const auto& qin = t.value(query);
        Tensor<T>* gk = t.requires_grad(k) ? &t.grad(k) : nullptr;
        Tensor<T>* gv = t.requires_grad(v) ? &t.grad(v) : nullptr;
        Tensor<T>* gq = t.requires_grad(query) ? &t.grad(query) : nullptr;
        std::vector<T> dp(m);
        for (std::size_t b = 0; b < batch; ++b) {
            const T* p = probs->data() + b * m;
            const T* gb = g.ptr() + b * c;
            T dot_pp = 0;
            for (std::size_t j = 0; j < m; ++j) {
                T s = 0;
                for (std::size_t e = 0; e < c; ++e) s += gb[e] * vin.data[(b * m + j) * c + e];
                dp[j] = s;
                dot_pp += p[j] * s;
                if (gv)
                    for (std::size_t e = 0; e < c; ++e) gv->data[(b * m + j) * c + e] += p[j] * gb[e];
            }
            for (std::size_t j = 0; j < m; ++j) {
                const T ds = p[j] * (dp[j] - dot_pp) * inv_sqrt;
                for (std::size_t e = 0; e < c; ++e) {
                    if (gk) gk->data[(b * m + j) * c + e] += ds * qin.data[e];
                    if (gq) gq->data[e] += ds * kin.data[(b * m + j) * c + e];
                }
            }
        }
    });
}

}  // namespace aerotx::nn
