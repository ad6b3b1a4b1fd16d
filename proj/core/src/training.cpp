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

#include "aerotx/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "aerotx/error.hpp"
#include "aerotx/nn/ops.hpp"

namespace aerotx::training {

using nn::Tape;
using nn::Tensor;
using nn::Var;
using nn::Shape;

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::pretrain: return "pretrain";
        case Strategy::finetune_full: return "full";
        case Strategy::finetune_attn: return "attn";
        case Strategy::finetune_lora: return "lora";
    }
    return "pretrain";
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "pretrain") return Strategy::pretrain;
    if (s == "full" || s == "finetune_full") return Strategy::finetune_full;
    if (s == "attn" || s == "finetune_attn") return Strategy::finetune_attn;
    if (s == "lora" || s == "finetune_lora") return Strategy::finetune_lora;
    throw ConfigError("strategy must be pretrain, full, attn or lora, got " + s);
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (!(lr_max > 0.0)) throw ConfigError("lr_max must be positive");
    if (!(lambda_coef >= 0.0)) throw ConfigError("lambda_coef must be non-negative");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
    if (!(lr_start_frac > 0.0) || !(lr_end_frac > 0.0)) throw ConfigError("schedule fractions must be positive");
    if (strategy == Strategy::finetune_lora && lora_rank == 0) throw ConfigError("lora_rank must be at least 1");
}

TrainConfig TrainConfig::pretrain_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::finetune_defaults() {
    TrainConfig c;
    c.lr_max = 1e-4;
    c.lr_start_frac = 0.005;
    c.lr_end_frac = 0.001;
    c.strategy = Strategy::finetune_full;
    return c;
}

double one_cycle_lr(std::size_t step, std::size_t total, double lr_max, double start_frac, double end_frac) {
    if (total == 0) return lr_max * start_frac;
    step = std::min(step, total);
    const double half = static_cast<double>(total) / 2.0;
    const double s = static_cast<double>(step);
    if (s <= half) {
        const double t = half > 0.0 ? s / half : 1.0;
        return lr_max * (start_frac + (1.0 - start_frac) * t);
    }
    const double t = (s - half) / (static_cast<double>(total) - half);
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * t));
    return lr_max * (end_frac + (1.0 - end_frac) * cosine);
}

template <typename T>
double clip_grad_norm(std::vector<nn::Parameter<T>>& params, double max_norm) {
    if (!(max_norm > 0.0)) throw ConfigError("clip_grad_norm: max_norm must be positive");
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.trainable) continue;
        for (T g : p.grad.data) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& p : params) {
            if (!p.trainable) continue;
            for (T& g : p.grad.data) g = static_cast<T>(static_cast<double>(g) * s);
        }
    }
    return norm;
}

template <typename T>
void AdamW<T>::step(std::vector<nn::Parameter<T>>& params, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& p : params) {
        if (!p.trainable) continue;
        if (p.grad.shape != p.value.shape) p.zero_grad();
        auto& st = state_[p.name];
        if (st.m.size() != p.value.size()) {
            st.m.assign(p.value.size(), 0.0);
            st.v.assign(p.value.size(), 0.0);
        }
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad.data[i];
            st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g;
            st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g * g;
            const double update = (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps_);
            const double w = p.value.data[i];
            p.value.data[i] = static_cast<T>(w - lr * (update + weight_decay_ * w));
        }
    }
}

template <typename T>
Var surface_loss(Tape<T>& tape, Var pred, Var truth) {
    const Shape& s = tape.shape(pred);
    if (s.size() != 4 || s != tape.shape(truth)) throw ConfigError("surface_loss: expected matching [B, 3, H, W]");
    const double cells = static_cast<double>(s[0] * s[2] * s[3]);
    return nn::scale(tape, nn::sum_squares(tape, nn::sub(tape, pred, truth)), static_cast<T>(1.0 / cells));
}

template <typename T>
Var coefficient_loss(Tape<T>& tape, Var pred_phys, std::shared_ptr<const Tensor<T>> weights,
                     const Tensor<T>& truth_phys) {
    const Shape& s = tape.shape(pred_phys);
    if (s.size() != 4 || truth_phys.shape != s) throw ConfigError("coefficient_loss: expected matching [B, 3, H, W]");
    const std::size_t batch = s[0];
    const std::size_t features = truth_phys.size() / batch;
    Var pred_flat = nn::reshape(tape, pred_phys, {batch, features});
    Var pred_coef = nn::batched_dot(tape, pred_flat, weights);
    Tape<T> scratch(false);
    Var truth_flat = scratch.constant(Tensor<T>({batch, features}, truth_phys.data));
    Tensor<T> truth_coef = scratch.value(nn::batched_dot(scratch, truth_flat, weights));
    Var diff = nn::sub(tape, pred_coef, tape.constant(std::move(truth_coef)));
    return nn::scale(tape, nn::sum_squares(tape, diff), static_cast<T>(1.0 / static_cast<double>(batch)));
}

template <typename T>
Var total_loss(Tape<T>& tape, Var pred_std, const Tensor<T>& truth_std, const model::Standardization& stats,
               std::shared_ptr<const Tensor<T>> weights, const Tensor<T>& truth_phys, double lambda) {
    Var surf = surface_loss(tape, pred_std, tape.constant(truth_std));
    std::vector<T> scale(stats.flow_std.begin(), stats.flow_std.end());
    std::vector<T> shift(stats.flow_mean.begin(), stats.flow_mean.end());
    Var phys = nn::affine_channels(tape, pred_std, std::move(scale), std::move(shift));
    Var coef = coefficient_loss(tape, phys, std::move(weights), truth_phys);
    return nn::add(tape, surf, nn::scale(tape, coef, static_cast<T>(lambda)));
}

TrainingSet::TrainingSet(const dataset::Dataset& data, std::vector<std::size_t> indices)
    : data_(&data), indices_(std::move(indices)) {
    if (indices_.empty()) throw ConfigError("training set is empty");
    for (std::size_t idx : indices_) {
        if (idx >= data.records.size()) throw ConfigError("training set index out of range");
        const auto& r = data.records[idx];
        if (height_ == 0) {
            height_ = r.height;
            width_ = r.width;
        } else if (r.height != height_ || r.width != width_) {
            throw ConfigError("training set mixes mesh resolutions");
        }
        if (!forces_.contains(r.shape_id)) {
            const auto& shape = data.manifest.shape_list.at(r.shape_id);
            const auto mesh = dataset::record_mesh(data.manifest, r);
            const double c_mac = geometry::build_planform(shape.planform).mean_aerodynamic_chord();
            forces_.emplace(r.shape_id, aero::force_weights(mesh, c_mac));
        }
    }
}

namespace {

template <typename T>
struct BatchTensors {
    Tensor<T> mesh;
    Tensor<T> truth_std;
    Tensor<T> truth_phys;
    Tensor<T> coef_std;
    std::shared_ptr<Tensor<T>> weights;
    std::vector<aero::OperatingCondition> oc;
};

template <typename T>
BatchTensors<T> make_batch(const TrainingSet& data, const std::vector<std::size_t>& items,
                           const model::Standardization& stats, bool with_weights) {
    const std::size_t batch = items.size();
    const std::size_t h = data.height(), w = data.width(), plane = h * w;
    BatchTensors<T> b;
    b.mesh = Tensor<T>({batch, 3, h, w});
    b.truth_std = Tensor<T>({batch, 3, h, w});
    b.truth_phys = Tensor<T>({batch, 3, h, w});
    b.coef_std = Tensor<T>({batch, 3});
    if (with_weights) b.weights = std::make_shared<Tensor<T>>(nn::Shape{batch, 2, 3 * plane});
    for (std::size_t k = 0; k < batch; ++k) {
        const auto& r = data.record(items[k]);
        for (std::size_t ch = 0; ch < 3; ++ch) {
            for (std::size_t i = 0; i < plane; ++i) {
                const std::size_t src = ch * plane + i;
                const std::size_t dst = (k * 3 + ch) * plane + i;
                b.mesh.data[dst] = static_cast<T>(r.mesh[src]);
                b.truth_phys.data[dst] = static_cast<T>(r.flow[src]);
                b.truth_std.data[dst] =
                    static_cast<T>((static_cast<double>(r.flow[src]) - stats.flow_mean[ch]) / stats.flow_std[ch]);
            }
            b.coef_std.data[k * 3 + ch] =
                static_cast<T>((static_cast<double>(r.coefficients[ch]) - stats.coef_mean[ch]) / stats.coef_std[ch]);
        }
        b.oc.push_back(r.condition());
        if (with_weights) {
            const auto cw = aero::coefficient_weights(data.forces(items[k]), r.oc[1]);
            for (std::size_t row = 0; row < 2; ++row)
                std::transform(cw.rows[row].begin(), cw.rows[row].end(),
                               b.weights->data.begin() + static_cast<std::ptrdiff_t>((k * 2 + row) * 3 * plane),
                               [](double v) { return static_cast<T>(v); });
        }
    }
    return b;
}

template <typename T>
void apply_strategy(model::Model<T>& m, const TrainConfig& cfg) {
    switch (cfg.strategy) {
        case Strategy::pretrain:
        case Strategy::finetune_full: m.set_trainable(model::TrainableSet::all); break;
        case Strategy::finetune_attn: m.set_trainable(model::TrainableSet::attention); break;
        case Strategy::finetune_lora:
            if (!m.has_lora()) m.apply_lora(model::LoRAConfig{cfg.lora_rank}, cfg.seed ^ 0x10a4ULL);
            m.set_trainable(model::TrainableSet::lora);
            break;
    }
}

}  // namespace

template <typename T>
TrainResult train(model::Model<T>& m, const TrainingSet& data, const TrainConfig& cfg, const LogSink& log) {
    cfg.validate();
    apply_strategy(m, cfg);
    const auto start = std::chrono::steady_clock::now();
    TrainResult result;
    if (cfg.total_steps == 0) return result;

    const bool surf = m.config().variant == model::Variant::surf;
    const bool with_coef = surf && cfg.lambda_coef > 0.0;
    AdamW<T> opt(cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    dataset::Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;
    auto& params = m.parameters();
    std::vector<std::vector<T>> last_good(params.size());

    for (std::size_t step = 0; step < cfg.total_steps; ++step) {
        std::vector<std::size_t> items;
        while (items.size() < std::min(cfg.batch_size, data.size())) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            items.push_back(order[cursor++]);
        }
        const auto batch = make_batch<T>(data, items, m.standardization(), with_coef);

        for (auto& p : params) p.zero_grad();
        Tape<T> tape(true);
        Var pred = m.forward(tape, batch.mesh, batch.oc);
        Var loss;
        double surf_term = 0.0, coef_term = 0.0;
        if (!surf) {
            Var diff = nn::sub(tape, pred, tape.constant(batch.coef_std));
            loss = nn::scale(tape, nn::sum_squares(tape, diff), static_cast<T>(1.0 / static_cast<double>(items.size())));
            coef_term = tape.value(loss).data[0];
        } else if (with_coef) {
            loss = total_loss<T>(tape, pred, batch.truth_std, m.standardization(), batch.weights, batch.truth_phys,
                              cfg.lambda_coef);
        } else {
            loss = surface_loss(tape, pred, tape.constant(batch.truth_std));
            surf_term = tape.value(loss).data[0];
        }
        const double loss_value = tape.value(loss).data[0];
        if (!std::isfinite(loss_value)) {
            if (step > 0)
                for (std::size_t i = 0; i < params.size(); ++i) params[i].value.data = last_good[i];
            throw TrainingDiverged("loss is not finite at step " + std::to_string(step), step);
        }
        tape.backward(loss);
        const double grad_norm = clip_grad_norm(params, cfg.clip_norm);
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i].trainable) last_good[i] = params[i].value.data;
        const double lr = one_cycle_lr(step, cfg.total_steps, cfg.lr_max, cfg.lr_start_frac, cfg.lr_end_frac);
        opt.step(params, lr);
        result.final_loss = loss_value;
        result.steps = step + 1;

        if (log && (step % std::max<std::size_t>(cfg.log_every, 1) == 0 || step + 1 == cfg.total_steps)) {
            nlohmann::json entry{{"step", step}, {"lr", lr}, {"loss", loss_value}, {"grad_norm", grad_norm}};
            if (surf && !with_coef) entry["loss_surf"] = surf_term;
            if (!surf) entry["loss_coef"] = coef_term;
            result.history.push_back(entry);
            log(entry);
        }
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

template <typename T>
Evaluation evaluate(const model::Model<T>& m, const TrainingSet& data, std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("evaluate: batch_size must be at least 1");
    Evaluation ev;
    const bool surf = m.config().variant == model::Variant::surf;
    std::array<double, 3> flow_sum{}, coef_sum{};
    const std::size_t plane = data.height() * data.width();
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        std::vector<std::size_t> items;
        for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) items.push_back(i);
        const auto batch = make_batch<T>(data, items, m.standardization(), false);
        const Tensor<T> out = m.predict(batch.mesh, batch.oc);
        for (std::size_t k = 0; k < items.size(); ++k) {
            const auto& r = data.record(items[k]);
            aero::AeroCoefficients pred_coef;
            if (surf) {
                aero::SurfaceFlow pred(data.height(), data.width());
                std::transform(out.data.begin() + static_cast<std::ptrdiff_t>(k * 3 * plane),
                               out.data.begin() + static_cast<std::ptrdiff_t>((k + 1) * 3 * plane), pred.data.begin(),
                               [](T v) { return static_cast<double>(v); });
                const auto fm = aero::field_error(pred, r.surface_flow());
                flow_sum[0] += fm.d_cp;
                flow_sum[1] += fm.d_cf_tau;
                flow_sum[2] += fm.d_cf_z;
                ev.flow.degenerate_samples += fm.degenerate_samples;
                pred_coef = aero::integrate_coefficients(data.forces(items[k]), pred, r.oc[1]);
            } else {
                pred_coef = {out.data[k * 3], out.data[k * 3 + 1], out.data[k * 3 + 2]};
            }
            coef_sum[0] += std::abs(pred_coef.cl - r.coefficients[0]);
            coef_sum[1] += std::abs(pred_coef.cd - r.coefficients[1]);
            coef_sum[2] += std::abs(pred_coef.cmz - r.coefficients[2]);
        }
    }
    const double n = static_cast<double>(data.size());
    ev.samples = data.size();
    if (surf) {
        ev.flow.d_cp = flow_sum[0] / n;
        ev.flow.d_cf_tau = flow_sum[1] / n;
        ev.flow.d_cf_z = flow_sum[2] / n;
        ev.flow.sfe = (ev.flow.d_cp + ev.flow.d_cf_tau + ev.flow.d_cf_z) / 3.0;
    }
    ev.coef = {coef_sum[0] / n, coef_sum[1] / n, coef_sum[2] / n};
    return ev;
}

CrossValidation cross_validate(std::span<const dataset::SampleRecord> records, std::size_t folds, std::uint64_t seed,
                               dataset::Granularity granularity, const FoldRunner& runner) {
    const auto assignment = dataset::split_folds(records, folds, seed, granularity);
    CrossValidation cv;
    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < assignment.size(); ++i) (assignment[i] == f ? test : train).push_back(i);
        cv.folds.push_back(runner(train, test));
    }
    for (const auto& [key, _] : cv.folds.front()) {
        double sum = 0.0;
        for (const auto& fm : cv.folds) sum += fm.at(key);
        const double mean = sum / static_cast<double>(folds);
        double var = 0.0;
        for (const auto& fm : cv.folds) var += (fm.at(key) - mean) * (fm.at(key) - mean);
        cv.mean[key] = mean;
        cv.stddev[key] = std::sqrt(var / static_cast<double>(folds));
    }
    return cv;
}

BudgetReport budget_report(double sample_gen_time_per_10, double train_time_per_1k_steps) {
    if (!(sample_gen_time_per_10 > 0.0) || !(train_time_per_1k_steps > 0.0))
        throw ConfigError("budget_report: times must be positive");
    return {sample_gen_time_per_10 / train_time_per_1k_steps, sample_gen_time_per_10, train_time_per_1k_steps};
}

nlohmann::json to_json(const Evaluation& e) {
    return {{"samples", e.samples},
            {"d_cp", e.flow.d_cp},
            {"d_cf_tau", e.flow.d_cf_tau},
            {"d_cf_z", e.flow.d_cf_z},
            {"sfe", e.flow.sfe},
            {"degenerate_samples", e.flow.degenerate_samples},
            {"d_cl", e.coef.d_cl},
            {"d_cd", e.coef.d_cd},
            {"d_cmz", e.coef.d_cmz}};
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"batch_size", c.batch_size},       {"total_steps", c.total_steps},   {"lr_max", c.lr_max},
         {"lr_start_frac", c.lr_start_frac}, {"lr_end_frac", c.lr_end_frac},   {"clip_norm", c.clip_norm},
         {"lambda_coef", c.lambda_coef},     {"seed", c.seed},                 {"strategy", to_string(c.strategy)},
         {"lora_rank", c.lora_rank},         {"beta1", c.beta1},               {"beta2", c.beta2},
         {"eps", c.eps},                     {"weight_decay", c.weight_decay}, {"log_every", c.log_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    const Strategy strategy = strategy_from_string(j.value("strategy", std::string("pretrain")));
    const TrainConfig d = strategy == Strategy::pretrain ? TrainConfig::pretrain_defaults()
                                                         : TrainConfig::finetune_defaults();
    c = d;
    c.strategy = strategy;
    c.batch_size = j.value("batch_size", d.batch_size);
    c.total_steps = j.value("total_steps", d.total_steps);
    c.lr_max = j.value("lr_max", d.lr_max);
    c.lr_start_frac = j.value("lr_start_frac", d.lr_start_frac);
    c.lr_end_frac = j.value("lr_end_frac", d.lr_end_frac);
    c.clip_norm = j.value("clip_norm", d.clip_norm);
    c.lambda_coef = j.value("lambda_coef", d.lambda_coef);
    c.seed = j.value("seed", d.seed);
    c.lora_rank = j.value("lora_rank", d.lora_rank);
    c.beta1 = j.value("beta1", d.beta1);
    c.beta2 = j.value("beta2", d.beta2);
    c.eps = j.value("eps", d.eps);
    c.weight_decay = j.value("weight_decay", d.weight_decay);
    c.log_every = j.value("log_every", d.log_every);
}

void to_json(nlohmann::json& j, const BudgetReport& b) {
    j = {{"gamma", b.gamma},
         {"sample_gen_time_per_10", b.sample_gen_time_per_10},
         {"train_time_per_1k_steps", b.train_time_per_1k_steps}};
}

template double clip_grad_norm<float>(std::vector<nn::Parameter<float>>&, double);
template double clip_grad_norm<double>(std::vector<nn::Parameter<double>>&, double);
template class AdamW<float>;
template class AdamW<double>;

#define AEROTX_INSTANTIATE(T)                                                                                       \
    template Var surface_loss<T>(Tape<T>&, Var, Var);                                                               \
    template Var coefficient_loss<T>(Tape<T>&, Var, std::shared_ptr<const Tensor<T>>, const Tensor<T>&);           \
    template Var total_loss<T>(Tape<T>&, Var, const Tensor<T>&, const model::Standardization&,                     \
                               std::shared_ptr<const Tensor<T>>, const Tensor<T>&, double);                         \
    template TrainResult train<T>(model::Model<T>&, const TrainingSet&, const TrainConfig&, const LogSink&);        \
    template Evaluation evaluate<T>(const model::Model<T>&, const TrainingSet&, std::size_t);

AEROTX_INSTANTIATE(float)
AEROTX_INSTANTIATE(double)

#undef AEROTX_INSTANTIATE

}  // namespace aerotx::training
