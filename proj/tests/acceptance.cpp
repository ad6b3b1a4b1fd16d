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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero on any
// failure. Pass criterion ids (P1 ... P12) as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "aerotx/aero.hpp"
#include "aerotx/dataset.hpp"
#include "aerotx/model.hpp"
#include "aerotx/nn/ops.hpp"
#include "aerotx/service/checkpoint.hpp"
#include "aerotx/service/service.hpp"
#include "aerotx/training.hpp"

// After the project headers: <resolv.h> defines a _res macro that breaks Eigen.
#include <httplib.h>

using namespace aerotx;
using nlohmann::json;
using nn::Tensor;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Collects named sub-checks; the criterion passes when every sub-check does.
class Report {
public:
    void check(bool ok, const std::string& what) {
        pass_ = pass_ && ok;
        if (!detail_.empty()) detail_ += "; ";
        detail_ += what;
        if (!ok) detail_ += " [violated]";
    }
    Outcome done() const { return {pass_, detail_}; }

private:
    bool pass_ = true;
    std::string detail_;
};

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

model::ModelConfig toy(std::size_t hidden0 = 8) {
    model::ModelConfig c;
    c.hidden0 = hidden0;
    c.depths = {1, 1, 1, 1, 1};
    return c;
}

template <typename T>
Tensor<T> random_tensor(nn::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(u(rng));
    return t;
}

// Moves the zero-initialized modulation layers off zero so every block contributes.
template <typename T>
void perturb_modulation(model::Model<T>& m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto& p : m.parameters())
        if (p.name.find(".mod.") != std::string::npos)
            for (auto& v : p.value.data) v = static_cast<T>(u(rng));
}

template <typename T>
Tensor<T> run(const model::Model<T>& m, const Tensor<T>& mesh, const std::vector<aero::OperatingCondition>& oc) {
    nn::Tape<T> tape(false);
    return tape.value(m.forward(tape, mesh, oc));
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

// ---------------------------------------------------------------------------------------

Outcome gradient_correctness() {
    Stopwatch clock;
    auto space = dataset::DesignSpace::pretrain_like();
    space.resolution = {16, 16};
    const auto data = dataset::generate_in_memory(space, 1, 31, 1);
    const auto stats = dataset::compute_standardization(data.records, iota(data.records.size()));
    const std::vector<std::size_t> picks{0, 5};
    const std::size_t batch = picks.size(), plane = 16 * 16;

    model::Model<double> m(toy(), 11);
    m.set_standardization(stats);
    perturb_modulation(m, 12);

    Tensor<double> mesh({batch, 3, 16, 16}), truth_phys({batch, 3, 16, 16}), truth_std({batch, 3, 16, 16});
    auto weights = std::make_shared<Tensor<double>>(nn::Shape{batch, 2, 3 * plane});
    std::vector<aero::OperatingCondition> oc;
    for (std::size_t b = 0; b < batch; ++b) {
        const auto& r = data.records[picks[b]];
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t i = 0; i < plane; ++i) {
                const std::size_t k = (b * 3 + ch) * plane + i;
                mesh.data[k] = r.mesh[ch * plane + i];
                truth_phys.data[k] = r.flow[ch * plane + i];
                truth_std.data[k] = (truth_phys.data[k] - stats.flow_mean[ch]) / stats.flow_std[ch];
            }
        const auto& shape = data.manifest.shape_list.at(r.shape_id);
        const double c_mac = geometry::build_planform(shape.planform).mean_aerodynamic_chord();
        const auto cw = aero::coefficient_weights(
            aero::force_weights(dataset::record_mesh(data.manifest, r), c_mac), r.condition().aoa_deg);
        for (std::size_t row = 0; row < 2; ++row)
            std::copy(cw.rows[row].begin(), cw.rows[row].end(), weights->data.begin() + (b * 2 + row) * 3 * plane);
        oc.push_back(r.condition());
    }

    auto loss = [&](bool grad) {
        nn::Tape<double> tape(grad);
        nn::Var y = m.forward(tape, mesh, oc);
        nn::Var l = training::total_loss<double>(tape, y, truth_std, stats, weights, truth_phys, 0.1);
        const double v = tape.value(l).data[0];
        if (grad) tape.backward(l);
        return v;
    };
    auto& params = m.parameters();
    for (auto& p : params) p.zero_grad();
    loss(true);

    // A parameter tensor uniformly at random, then an entry uniformly within it.
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
    const std::size_t n_checks = 64;
    const double h = 1e-4, floor = 1e-6;
    double worst = 0.0;
    std::size_t nonzero = 0;
    for (std::size_t t = 0; t < n_checks; ++t) {
        auto& p = params[pick_param(rng)];
        const std::size_t i = std::uniform_int_distribution<std::size_t>(0, p.value.size() - 1)(rng);
        const double x0 = p.value.data[i];
        auto at = [&](double dx) {
            p.value.data[i] = x0 + dx;
            return loss(false);
        };
        // Fourth-order central stencil.
        const double fd = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
        p.value.data[i] = x0;
        const double an = p.grad.data[i];
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor}));
        nonzero += std::abs(an) > floor ? 1 : 0;
    }
    const double secs = clock.seconds();
    Report r;
    r.check(worst < 1e-4, fmt("%zu random parameters (%zu with |g| > %.0e), max rel err %.2e < 1e-4", n_checks,
                              nonzero, floor, worst));
    r.check(nonzero >= 50, fmt("%zu >= 50 non-trivial gradients", nonzero));
    r.check(secs < 120, fmt("%.1f s < 120 s", secs));
    return r.done();
}

// Dense multi-head attention with an explicit pair mask and bias lookup.
std::vector<double> dense_attention(const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v,
                                    const Tensor<double>& bias, std::size_t heads,
                                    const std::function<bool(std::size_t, std::size_t)>& allowed,
                                    const std::function<std::size_t(std::size_t, std::size_t)>& bias_row) {
    const std::size_t n = q.rows(), c = q.cols(), d = c / heads;
    std::vector<double> out(n * c, 0.0);
    for (std::size_t hd = 0; hd < heads; ++hd)
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> logit(n, -std::numeric_limits<double>::infinity());
            double mx = logit[0];
            for (std::size_t j = 0; j < n; ++j) {
                if (!allowed(i, j)) continue;
                double s = 0;
                for (std::size_t e = 0; e < d; ++e) s += q.data[i * c + hd * d + e] * k.data[j * c + hd * d + e];
                logit[j] = s / std::sqrt(static_cast<double>(d)) + bias.data[bias_row(i, j) * heads + hd];
                mx = std::max(mx, logit[j]);
            }
            double z = 0;
            for (std::size_t j = 0; j < n; ++j)
                if (allowed(i, j)) z += std::exp(logit[j] - mx);
            for (std::size_t j = 0; j < n; ++j) {
                if (!allowed(i, j)) continue;
                const double p = std::exp(logit[j] - mx) / z;
                for (std::size_t e = 0; e < d; ++e) out[i * c + hd * d + e] += p * v.data[j * c + hd * d + e];
            }
        }
    return out;
}

Outcome attention_equivalence() {
    const std::size_t h = 8, w = 8, win = 4, c = 8, heads = 2;
    const auto plan = nn::WindowPlan::make(h, w, win, true);
    const std::size_t s = plan->shift_h;
    // Token (r, c) sits at rolled position ((r - s) mod H, (c - s) mod W); two tokens interact when
    // they share a rolled window and no wrap-around separates them.
    const auto rolled = [&](std::size_t i) {
        return std::pair<std::size_t, std::size_t>{(i / w + h - s) % h, (i % w + w - s) % w};
    };
    const auto allowed = [&](std::size_t i, std::size_t j) {
        const auto [ri, ci] = rolled(i);
        const auto [rj, cj] = rolled(j);
        if (ri / win != rj / win || ci / win != cj / win) return false;
        const long dr = static_cast<long>(i / w) - static_cast<long>(j / w);
        const long dc = static_cast<long>(i % w) - static_cast<long>(j % w);
        return dr == static_cast<long>(ri) - static_cast<long>(rj) && dc == static_cast<long>(ci) - static_cast<long>(cj);
    };
    const auto row = [&](std::size_t i, std::size_t j) {
        const auto [ri, ci] = rolled(i);
        const auto [rj, cj] = rolled(j);
        return (ri % win + win - 1 - rj % win) * (2 * win - 1) + (ci % win + win - 1 - cj % win);
    };
    const auto q = random_tensor<double>({h * w, c}, 60), k = random_tensor<double>({h * w, c}, 61),
               v = random_tensor<double>({h * w, c}, 62);
    const auto bias = random_tensor<double>({plan->bias_rows(), heads}, 63);
    const auto expect = dense_attention(q, k, v, bias, heads, allowed, row);
    nn::Tape<double> tape(false);
    const auto got = tape.value(nn::window_attention(tape, tape.constant(q), tape.constant(k), tape.constant(v),
                                                     tape.constant(bias), plan, heads))
                         .data;
    const double diff = max_abs_diff(got, expect);
    Report r;
    r.check(s == win / 2, fmt("shift %zu", s));
    r.check(diff <= 1e-6, fmt("8x8 grid, window 4, shifted: max |window - dense masked| %.2e <= 1e-6", diff));
    return r.done();
}

Outcome adaln_zero_identity() {
    Report r;
    const std::vector<aero::OperatingCondition> conditions{{0.7, -2.0}, {0.78, 0.5}, {0.85, 2.0}, {0.9, 4.5}};
    for (auto variant : {model::Variant::surf, model::Variant::coef}) {
        auto cfg = toy();
        cfg.variant = variant;
        double d64 = 0, d32 = 0;
        const model::Model<double> m(cfg, 5);
        const model::Model<float> mf(cfg, 5);
        const auto mesh = random_tensor<double>({1, 3, 32, 16}, 6);
        const auto meshf = random_tensor<float>({1, 3, 32, 16}, 6);
        const auto ref = run(m, mesh, {conditions[0]});
        const auto reff = run(mf, meshf, {conditions[0]});
        for (const auto& oc : conditions) {
            d64 = std::max(d64, max_abs_diff(run(m, mesh, {oc}).data, ref.data));
            const auto y = run(mf, meshf, {oc});
            for (std::size_t i = 0; i < y.size(); ++i)
                d32 = std::max(d32, std::abs(static_cast<double>(y.data[i]) - static_cast<double>(reff.data[i])));
        }
        const char* name = variant == model::Variant::surf ? "surf" : "coef";
        r.check(d64 == 0.0, fmt("%s f64 max diff over conditions %.1e == 0", name, d64));
        r.check(d32 == 0.0, fmt("%s f32 max diff %.1e == 0", name, d32));
    }
    return r.done();
}

Outcome integration_identities() {
    Report r;
    const auto pre = dataset::DesignSpace::pretrain_like(), fin = dataset::DesignSpace::finetune_like();
    dataset::Rng rng(71);
    std::vector<geometry::WingShape> wings{dataset::baseline_wing()};
    for (int i = 0; i < 3; ++i) wings.push_back(dataset::sample_shape(pre, rng));
    for (int i = 0; i < 3; ++i) wings.push_back(dataset::sample_shape(fin, rng));

    double zero_force = 0, linearity = 0, sensitivity = 0;
    std::uniform_real_distribution<double> u(-1.0, 1.0), aoa(-4.0, 6.0), cp(-2.0, 2.0);
    for (const auto& w : wings) {
        const auto mesh = geometry::build_surface_mesh(w, {64, 32});
        const aero::OperatingCondition oc{0.8, aoa(rng)};

        aero::SurfaceFlow uniform(mesh.height, mesh.width);
        std::fill(uniform.data.begin(), uniform.data.begin() + mesh.cells(), cp(rng));
        const auto c0 = aero::integrate_coefficients(mesh, w, uniform, oc);
        zero_force = std::max({zero_force, std::abs(c0.cl), std::abs(c0.cd)});

        aero::SurfaceFlow f1(mesh.height, mesh.width), f2(mesh.height, mesh.width), mix(mesh.height, mesh.width);
        for (auto& v : f1.data) v = u(rng);
        for (auto& v : f2.data) v = u(rng);
        const double a = u(rng) * 2, b = u(rng) * 2;
        for (std::size_t k = 0; k < mix.data.size(); ++k) mix.data[k] = a * f1.data[k] + b * f2.data[k];
        const auto c1 = aero::integrate_coefficients(mesh, w, f1, oc);
        const auto c2 = aero::integrate_coefficients(mesh, w, f2, oc);
        const auto cm = aero::integrate_coefficients(mesh, w, mix, oc);
        linearity = std::max({linearity, std::abs(cm.cl - (a * c1.cl + b * c2.cl)),
                              std::abs(cm.cd - (a * c1.cd + b * c2.cd)), std::abs(cm.cmz - (a * c1.cmz + b * c2.cmz))});

        const auto sens = aero::integration_sensitivity(mesh, oc);
        std::uniform_int_distribution<std::size_t> cell(0, mesh.cells() - 1);
        for (int t = 0; t < 20; ++t) {
            const std::size_t c = cell(rng);
            const double h = 1e-3, x0 = f1.data[c];
            f1.data[c] = x0 + h;
            const auto p = aero::integrate_coefficients(mesh, w, f1, oc);
            f1.data[c] = x0 - h;
            const auto n = aero::integrate_coefficients(mesh, w, f1, oc);
            f1.data[c] = x0;
            sensitivity = std::max({sensitivity, std::abs((p.cl - n.cl) / (2 * h) - sens.dcl_dcp[c]),
                                    std::abs((p.cd - n.cd) / (2 * h) - sens.dcd_dcp[c])});
        }
    }
    r.check(zero_force <= 1e-8, fmt("%zu wings, uniform Cp: max |C_L|,|C_D| %.2e <= 1e-8", wings.size(), zero_force));
    r.check(linearity <= 1e-10, fmt("linearity max err %.2e <= 1e-10", linearity));
    r.check(sensitivity <= 1e-7, fmt("dC/dCp vs central differences max err %.2e <= 1e-7", sensitivity));
    return r.done();
}

Outcome lora() {
    Report r;
    model::Model<double> m(toy(), 3);
    perturb_modulation(m, 4);
    const auto mesh = random_tensor<double>({1, 3, 32, 16}, 5);
    const std::vector<aero::OperatingCondition> oc{{0.8, 2.0}};
    const auto base = run(m, mesh, oc);
    m.apply_lora({4}, 6);
    r.check(run(m, mesh, oc).data == base.data, "fresh adapters leave the output bit-identical");

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (auto& p : m.parameters())
        if (p.name.ends_with(".lora_down"))
            for (auto& v : p.value.data) v = u(rng);
    const auto adapted = run(m, mesh, oc);
    m.merge_lora();
    const double merge = max_abs_diff(adapted.data, run(m, mesh, oc).data);
    const double moved = max_abs_diff(adapted.data, base.data);
    r.check(merge <= 1e-6 && moved > 1e-3,
            fmt("merged vs adapter path max diff %.2e <= 1e-6 (adapters moved output by %.2e)", merge, moved));

    model::Model<float> large(model::ModelConfig::large(), 0);
    large.apply_lora({4}, 1);
    const double frac = static_cast<double>(large.param_count(true)) / static_cast<double>(large.param_count());
    r.check(frac >= 0.002 && frac <= 0.008,
            fmt("L config, r=4: %zu trainable of %zu = %.3f%% in [0.2%%, 0.8%%] (reference 0.4%%)",
                large.param_count(true), large.param_count(), 100 * frac));
    return r.done();
}

Outcome parameter_counts() {
    Report r;
    const double s = static_cast<double>(model::Model<float>(model::ModelConfig::small(), 0).param_count());
    const double md = static_cast<double>(model::Model<float>(model::ModelConfig::medium(), 0).param_count());
    const double lg = static_cast<double>(model::Model<float>(model::ModelConfig::large(), 0).param_count());
    r.check(std::abs(s - 1.0e6) <= 0.2e6, fmt("S %.3fM within 1.0M +- 20%%", s / 1e6));
    r.check(md / s >= 3.2 && md / s <= 4.4, fmt("M %.3fM, M/S %.2f in [3.2, 4.4]", md / 1e6, md / s));
    r.check(true, fmt("L %.2fM (not asserted)", lg / 1e6));
    return r.done();
}

Outcome schedule_and_clipping() {
    Report r;
    bool exact = true;
    for (double lr : {1e-3, 3e-3, 1e-4})
        for (std::size_t total : {std::size_t{2}, std::size_t{1000}, std::size_t{40000}}) {
            exact = exact && training::one_cycle_lr(0, total, lr, 0.04, 0.001) == 0.04 * lr;
            exact = exact && training::one_cycle_lr(total / 2, total, lr, 0.04, 0.001) == lr;
            exact = exact && training::one_cycle_lr(total, total, lr, 0.04, 0.001) == 0.001 * lr;
        }
    r.check(exact, "one-cycle lr at {0, T/2, T} == {0.04, 1, 0.001} x lr_max exactly");

    std::vector<nn::Parameter<double>> params(2);
    params[0].value = Tensor<double>({2}, std::vector<double>{0, 0});
    params[0].grad = Tensor<double>({2}, std::vector<double>{3, 4});
    params[1].value = Tensor<double>({1}, std::vector<double>{0});
    params[1].grad = Tensor<double>({1}, std::vector<double>{12});
    const double before = training::clip_grad_norm(params, 1.0);
    const bool scaled = params[0].grad.data[0] == 3 * (1.0 / 13) && params[0].grad.data[1] == 4 * (1.0 / 13) &&
                        params[1].grad.data[0] == 12 * (1.0 / 13);
    const double after = training::clip_grad_norm(params, 1.0);
    r.check(before == 13.0 && scaled && std::abs(after - 1.0) <= 1e-15,
            fmt("norm 13 clipped to 1: returned %.17g, post-clip norm %.17g", before, after));
    const auto kept = params[1].grad.data;
    training::clip_grad_norm(params, 2.0);
    r.check(params[1].grad.data == kept, "norm below threshold left untouched");
    return r.done();
}

Outcome overfit() {
    Stopwatch clock;
    auto space = dataset::DesignSpace::pretrain_like();
    space.resolution = {32, 16};
    const auto data = dataset::generate_in_memory(space, 2, 11, 1);
    const auto idx = iota(data.records.size());
    model::Model<float> m(toy(16), 1);
    m.set_standardization(dataset::compute_standardization(data.records, idx));
    const training::TrainingSet set(data, idx);
    training::TrainConfig cfg;
    cfg.total_steps = 3000;
    cfg.lr_max = 3e-3;
    cfg.batch_size = 16;
    training::train(m, set, cfg);
    const double sfe = training::evaluate(m, set).flow.sfe;
    const double secs = clock.seconds();
    Report r;
    r.check(sfe < 0.5, fmt("%zu samples, 3000 steps: train SFE %.3f%% < 0.5%%", idx.size(), sfe));
    r.check(secs < 600, fmt("%.0f s < 600 s", secs));
    return r.done();
}

Outcome two_stage() {
    Stopwatch clock;
    auto pre_space = dataset::DesignSpace::pretrain_like();
    auto fin_space = dataset::DesignSpace::finetune_like();
    pre_space.resolution = fin_space.resolution = {32, 16};
    const auto pre = dataset::generate_in_memory(pre_space, 64, 101, 1);
    const auto fin = dataset::generate_in_memory(fin_space, 40, 202, 1);
    const auto cfg = toy(16);

    const auto pidx = iota(pre.records.size());
    model::Model<float> base(cfg, 1);
    base.set_standardization(dataset::compute_standardization(pre.records, pidx));
    training::TrainConfig pc;
    pc.total_steps = 4000;
    pc.lr_max = 3e-3;
    training::train(base, training::TrainingSet(pre, pidx), pc);

    std::vector<std::size_t> test, pool;
    for (std::size_t i = 0; i < fin.records.size(); ++i) (fin.records[i].shape_id >= 32 ? test : pool).push_back(i);
    const training::TrainingSet test_set(fin, test);

    int wins = 0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto train_idx = dataset::select_samples(fin.records, pool, 32, dataset::Selection::one_per_shape, seed);
        const training::TrainingSet set(fin, train_idx);

        model::Model<float> tuned = base;
        auto fc = training::TrainConfig::finetune_defaults();
        fc.total_steps = 2000;
        fc.seed = seed;
        training::train(tuned, set, fc);

        model::Model<float> scratch(cfg, 1000 + seed);
        scratch.set_standardization(dataset::compute_standardization(fin.records, train_idx));
        training::TrainConfig sc;
        sc.total_steps = 2000;
        sc.lr_max = 3e-3;
        sc.seed = seed;
        training::train(scratch, set, sc);

        const double a = training::evaluate(tuned, test_set).flow.sfe;
        const double b = training::evaluate(scratch, test_set).flow.sfe;
        wins += a < b ? 1 : 0;
        per_seed += fmt(" %.3f/%.3f", a, b);
    }
    const double secs = clock.seconds();
    Report r;
    r.check(wins >= 4, fmt("fine-tuned < scratch test SFE in %d/5 >= 4/5 seeds (%%, tuned/scratch:%s)", wins,
                           per_seed.c_str()));
    r.check(secs < 3600, fmt("%.0f s < 3600 s", secs));
    return r.done();
}

Outcome lambda_ablation() {
    auto space = dataset::DesignSpace::pretrain_like();
    space.resolution = {32, 16};
    const std::size_t shapes = 32;
    const auto data = dataset::generate_in_memory(space, shapes, 303, 1);
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < data.records.size(); ++i)
        (data.records[i].shape_id >= shapes * 3 / 4 ? test_idx : train_idx).push_back(i);
    // MAEs are normalized by the test-set coefficient spread so C_L and C_D weigh alike.
    const auto test_stats = dataset::compute_standardization(data.records, test_idx);
    const training::TrainingSet train_set(data, train_idx), test_set(data, test_idx);

    int wins = 0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        double score[2];
        for (int k = 0; k < 2; ++k) {
            model::Model<float> m(toy(16), 500 + seed);
            m.set_standardization(dataset::compute_standardization(data.records, train_idx));
            training::TrainConfig cfg;
            cfg.total_steps = 1500;
            cfg.lr_max = 3e-3;
            cfg.seed = seed;
            cfg.lambda_coef = k == 1 ? 0.1 : 0.0;
            training::train(m, train_set, cfg);
            const auto e = training::evaluate(m, test_set);
            score[k] = e.coef.d_cl / test_stats.coef_std[0] + e.coef.d_cd / test_stats.coef_std[1];
        }
        wins += score[1] <= score[0] ? 1 : 0;
        per_seed += fmt(" %.4f/%.4f", score[1], score[0]);
    }
    Report r;
    r.check(wins >= 3,
            fmt("lambda=0.1 coefficient MAE <= lambda=0 in %d/5 >= 3/5 seeds (0.1/0:%s)", wins, per_seed.c_str()));
    return r.done();
}

std::vector<double> mesh_coordinates(const geometry::WingShape& w) {
    return geometry::build_surface_mesh(w, {32, 16}).cell_centers;
}

Outcome dataset_and_pca() {
    Report r;
    double worst = 0;
    std::size_t records = 0;
    std::uint64_t seed = 41;
    for (const auto& space : {dataset::DesignSpace::pretrain_like(), dataset::DesignSpace::finetune_like()}) {
        auto s = space;
        s.resolution = {32, 16};
        const auto d = dataset::generate_in_memory(s, 4, seed++, 1);
        for (const auto& rec : d.records) {
            const auto& shape = d.manifest.shape_list.at(rec.shape_id);
            const auto mesh = geometry::build_surface_mesh(shape, {32, 16});
            const double c_mac = geometry::build_planform(shape.planform).mean_aerodynamic_chord();
            const auto c = aero::integrate_coefficients(mesh, c_mac, rec.surface_flow(), rec.condition());
            worst = std::max({worst, std::abs(c.cl - rec.coefficients[0]), std::abs(c.cd - rec.coefficients[1]),
                              std::abs(c.cmz - rec.coefficients[2])});
            ++records;
        }
    }
    r.check(worst <= 1e-5, fmt("%zu records re-integrated: max coefficient err %.2e <= 1e-5", records, worst));

    dataset::Rng rng(18);
    std::uniform_real_distribution<double> ar(8.0, 11.0), tr(0.15, 0.40);
    std::vector<std::vector<double>> family;
    for (int i = 0; i < 40; ++i) {
        auto w = dataset::baseline_wing();
        w.planform.aspect_ratio = ar(rng);
        w.planform.taper_ratio = tr(rng);
        family.push_back(mesh_coordinates(w));
    }
    const std::size_t two_factor = dataset::pca_modes(family).modes.at(0);
    r.check(two_factor <= 4, fmt("2-factor family: %zu modes for 99%% <= 4", two_factor));

    std::size_t modes[2];
    int k = 0;
    for (const auto& space : {dataset::DesignSpace::pretrain_like(), dataset::DesignSpace::finetune_like()}) {
        dataset::Rng draw(21);
        std::vector<std::vector<double>> samples;
        for (int i = 0; i < 40; ++i) samples.push_back(mesh_coordinates(dataset::sample_shape(space, draw)));
        modes[k++] = dataset::pca_modes(samples).modes.at(0);
    }
    r.check(modes[1] > modes[0],
            fmt("modes for 99%%: finetune-like %zu > pretrain-like %zu (reference 11 vs 5)", modes[1], modes[0]));
    return r.done();
}

Outcome service_contract() {
    Report r;
    model::Model<float> m(toy(), 3);
    perturb_modulation(m, 4);
    model::Standardization s;
    s.mesh_mean = {0.5, 0.3, 0.02};
    s.mesh_std = {0.3, 0.2, 0.05};
    s.flow_mean = {-0.2, 0.003, 0.0};
    s.flow_std = {0.4, 0.001, 0.0005};
    m.set_standardization(s);
    const json provenance{{"resolution", {32, 16}}};

    const auto bytes = service::encode_checkpoint(m, provenance);
    json back_prov;
    const auto back = service::decode_checkpoint<float>(bytes, &back_prov);
    const auto probe = random_tensor<float>({1, 3, 32, 16}, 8, 0.0, 1.0);
    const bool same_params = [&] {
        for (std::size_t i = 0; i < m.parameters().size(); ++i)
            if (m.parameters()[i].value.data != back.parameters()[i].value.data) return false;
        return m.parameters().size() == back.parameters().size();
    }();
    r.check(same_params && service::encode_checkpoint(back, back_prov) == bytes &&
                back.predict(probe, {{0.8, 2.0}}).data == m.predict(probe, {{0.8, 2.0}}).data,
            fmt("checkpoint round trip bit-exact (%zu bytes)", bytes.size()));

    const service::PredictionService svc(back, back_prov);
    service::HttpServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    std::thread runner([&] { server.run(); });
    struct Stop {
        service::HttpServer& server;
        std::thread& runner;
        ~Stop() {
            server.stop();
            runner.join();
        }
    } stop{server, runner};
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(120, 0);
    auto post = [&](const json& body) {
        auto res = client.Post("/api/predict", body.dump(), "application/json");
        if (!res) throw Error("no response from /api/predict");
        return std::pair<int, json>{res->status, json::parse(res->body)};
    };

    dataset::Rng rng(77);
    double worst = 0;
    int ok = 0;
    std::vector<json> geometries;
    for (int i = 0; i < 20; ++i) {
        const auto space = i % 2 ? dataset::DesignSpace::finetune_like() : dataset::DesignSpace::pretrain_like();
        const auto shape = dataset::sample_shape(space, rng);
        const auto conditions = dataset::sample_conditions(space, rng, 2);
        json list = json::array();
        for (const auto& oc : conditions) list.push_back({{"mach", oc.mach}, {"aoa_deg", oc.aoa_deg}});
        const json geometry = shape;
        geometries.push_back(geometry);
        const auto [status, body] = post({{"geometry", geometry}, {"conditions", list}});
        if (status != 200) continue;
        // Re-integrate the returned fields on an independently built mesh.
        const auto g = geometry.get<geometry::WingShape>();
        const auto mesh = geometry::build_surface_mesh(g, {32, 16});
        const double c_mac = geometry::build_planform(g.planform).mean_aerodynamic_chord();
        bool sample_ok = body.at("fields").size() == conditions.size();
        for (std::size_t k = 0; sample_ok && k < conditions.size(); ++k) {
            aero::SurfaceFlow flow(32, 16);
            std::size_t offset = 0;
            for (const char* name : {"cp", "cf_tau", "cf_z"})
                for (float x : service::decode_f32(body["fields"][k].at(name).get<std::string>()))
                    flow.data.at(offset++) = x;
            sample_ok = offset == flow.data.size();
            const auto c = aero::integrate_coefficients(mesh, c_mac, flow, conditions[k]);
            const auto& got = body["coefficients"][k];
            worst = std::max({worst, std::abs(got.at("cl").get<double>() - c.cl),
                              std::abs(got.at("cd").get<double>() - c.cd),
                              std::abs(got.at("cmz").get<double>() - c.cmz)});
        }
        ok += sample_ok ? 1 : 0;
    }
    r.check(ok == 20 && worst <= 1e-5,
            fmt("/api/predict on %d/20 random wings: returned vs re-integrated coefficients max err %.2e <= 1e-5", ok,
                worst));

    std::vector<json> invalid;
    auto valid = [&] {
        return json{{"geometry", geometries[0]}, {"conditions", json::array({{{"mach", 0.8}, {"aoa_deg", 2.0}}})}};
    };
    invalid.push_back(valid());
    invalid.back()["conditions"][0]["mach"] = 1.3;
    invalid.push_back(valid());
    invalid.back()["conditions"][0]["aoa_deg"] = 45.0;
    invalid.push_back(valid());
    invalid.back()["geometry"]["planform"]["taper_ratio"] = -0.2;
    invalid.push_back(valid());
    invalid.back()["geometry"]["planform"]["aspect_ratio"] = "wide";
    invalid.push_back(valid());
    invalid.back()["geometry"].erase("planform");
    invalid.push_back(valid());
    invalid.back()["conditions"] = json::array();
    int rejected = 0;
    for (const auto& body : invalid) rejected += post(body).first == 422 ? 1 : 0;
    r.check(rejected == static_cast<int>(invalid.size()),
            fmt("%d/%zu invalid requests answered 422", rejected, invalid.size()));
    return r.done();
}

struct Criterion {
    const char* id;
    const char* name;
    Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
    ::setenv("AT_LOG", "warn", 0);
    service::configure_logging();
    const std::vector<Criterion> criteria{
        {"P1", "gradient correctness", gradient_correctness},
        {"P2", "attention equivalence", attention_equivalence},
        {"P3", "adaLN-Zero identity", adaln_zero_identity},
        {"P4", "integration identities", integration_identities},
        {"P5", "LoRA", lora},
        {"P6", "parameter counts", parameter_counts},
        {"P7", "schedule and clipping", schedule_and_clipping},
        {"P8", "overfit", overfit},
        {"P9", "two-stage fine-tuning beats scratch", two_stage},
        {"P10", "coefficient-loss ablation", lambda_ablation},
        {"P11", "dataset and PCA", dataset_and_pca},
        {"P12", "service contract", service_contract},
    };
    const std::set<std::string> only(argv + 1, argv + argc);
    for (const auto& id : only)
        if (std::none_of(criteria.begin(), criteria.end(), [&](const Criterion& c) { return id == c.id; })) {
            std::fprintf(stderr, "unknown criterion %s\n", id.c_str());
            return 2;
        }
    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.contains(c.id)) continue;
        Stopwatch clock;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("%-4s %s  %s: %s (%.1f s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                    clock.seconds());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
