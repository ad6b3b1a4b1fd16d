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

#include "aerotx/model.hpp"

#include <cmath>
#include <random>
#include <utility>

#include "aerotx/error.hpp"
#include "aerotx/nn/layout.hpp"
#include "aerotx/nn/ops.hpp"
#include "aerotx/nn/window.hpp"

namespace aerotx::model {

using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

std::size_t ModelConfig::stage_channels(std::size_t stage) const {
    const std::size_t latent = latent_stage();
    const std::size_t level = stage <= latent ? stage : 2 * latent - stage;
    return hidden0 << level;
}

void ModelConfig::validate() const {
    if (hidden0 == 0) throw ConfigError("hidden0 must be positive");
    if (depths.empty() || depths.size() % 2 == 0) throw ConfigError("number of stages must be odd");
    for (std::size_t s = 0; s < depths.size(); ++s) {
        if (depths[s] == 0) throw ConfigError("stage depths must be positive");
        if (variant == Variant::surf && depths[s] != depths[depths.size() - 1 - s])
            throw ConfigError("surface model depths must be symmetric around the latent stage");
    }
    if (patch_h == 0 || patch_w == 0) throw ConfigError("patch size must be positive");
    if (window == 0) throw ConfigError("window must be positive");
    if (heads == 0 || hidden0 % heads != 0)
        throw ConfigError("hidden0 (" + std::to_string(hidden0) + ") is not divisible by heads (" +
                          std::to_string(heads) + ")");
    if (mlp_ratio == 0 || bias_hidden == 0) throw ConfigError("mlp_ratio and bias_hidden must be positive");
    if (n_var != 3) throw ConfigError("n_var must be 3");
    if (n_cond != 2) throw ConfigError("n_cond must be 2");
}

void ModelConfig::validate_input(std::size_t height, std::size_t width) const {
    const std::size_t fh = patch_h << latent_stage();
    const std::size_t fw = patch_w << latent_stage();
    if (height == 0 || width == 0 || height % fh != 0 || width % fw != 0)
        throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not divisible by " + std::to_string(fh) + "x" + std::to_string(fw));
}

ModelConfig ModelConfig::small() { return ModelConfig{}; }

ModelConfig ModelConfig::medium() {
    ModelConfig c;
    c.hidden0 = 32;
    return c;
}

ModelConfig ModelConfig::large() {
    ModelConfig c;
    c.hidden0 = 64;
    return c;
}

std::array<double, 2> condition_features(const aero::OperatingCondition& oc) {
    return {(oc.mach - 0.8) / 0.1, oc.aoa_deg / 10.0};
}

namespace {

std::string block_name(std::size_t stage, std::size_t block) {
    return "stages." + std::to_string(stage) + ".blocks." + std::to_string(block) + ".";
}

bool is_attention_projection(const std::string& name) {
    if (name.find(".lora_") != std::string::npos) return false;
    for (const char* key : {".attn.q.", ".attn.k.", ".attn.v."})
        if (name.find(key) != std::string::npos) return true;
    return false;
}

}  // namespace

template <typename T>
template <typename Rng>
void Model<T>::add(const std::string& name, Shape shape, double bound, Rng& rng) {
    nn::Parameter<T> p;
    p.name = name;
    p.value = Tensor<T>(std::move(shape));
    if (bound > 0.0) {
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : p.value.data) v = static_cast<T>(dist(rng));
    }
    index_.emplace(name, params_.size());
    params_.push_back(std::move(p));
}

template <typename T>
template <typename Rng>
void Model<T>::add_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool zero) {
    const double bound = zero ? 0.0 : 1.0 / std::sqrt(static_cast<double>(in));
    add(name + ".weight", {out, in}, bound, rng);
    add(name + ".bias", {out}, bound, rng);
}

template <typename T>
void Model<T>::reindex() {
    index_.clear();
    for (std::size_t i = 0; i < params_.size(); ++i) index_.emplace(params_[i].name, i);
}

template <typename T>
Model<T>::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const ModelConfig& c = config_;
    const std::size_t e = c.cond_dim();
    add_linear("embed", 3 * c.patch_h * c.patch_w, c.hidden0, rng);
    add_linear("cond.fc1", c.n_cond, e, rng);
    add_linear("cond.fc2", e, e, rng);
    const std::size_t latent = c.latent_stage();
    for (std::size_t s = 0; s < c.built_stages(); ++s) {
        const std::size_t ch = c.stage_channels(s);
        if (s > latent) {
            add_linear("up." + std::to_string(s), 2 * ch, 4 * ch, rng);
            add_linear("skip." + std::to_string(s), 2 * ch, ch, rng);
        }
        for (std::size_t b = 0; b < c.depths[s]; ++b) {
            const std::string n = block_name(s, b);
            add_linear(n + "mod", e, 6 * ch, rng, true);
            for (const char* proj : {"attn.q", "attn.k", "attn.v", "attn.proj"}) add_linear(n + proj, ch, ch, rng);
            add_linear(n + "attn.bias_mlp.fc1", 2, c.bias_hidden, rng);
            add_linear(n + "attn.bias_mlp.fc2", c.bias_hidden, c.heads, rng);
            add_linear(n + "mlp.fc1", ch, c.mlp_ratio * ch, rng);
            add_linear(n + "mlp.fc2", c.mlp_ratio * ch, ch, rng);
        }
        if (s < latent) add_linear("down." + std::to_string(s), 4 * ch, 2 * ch, rng);
    }
    if (c.variant == Variant::surf) {
        add_linear("head", c.hidden0, c.n_var * c.patch_h * c.patch_w, rng);
    } else {
        const std::size_t ch = c.stage_channels(latent);
        add("pool.query", {ch}, 1.0 / std::sqrt(static_cast<double>(ch)), rng);
        add_linear("pool.k", ch, ch, rng);
        add_linear("pool.v", ch, ch, rng);
        add_linear("head", ch, 3, rng);
    }
}

template <typename T>
nn::Parameter<T>& Model<T>::parameter(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("no parameter named " + name);
    return params_[it->second];
}

template <typename T>
const nn::Parameter<T>& Model<T>::parameter(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("no parameter named " + name);
    return params_[it->second];
}

template <typename T>
Var Model<T>::forward(Tape<T>& tape, const Tensor<T>& mesh, const std::vector<aero::OperatingCondition>& oc) {
    return forward_impl(params_, tape, mesh, oc);
}

template <typename T>
Var Model<T>::forward(Tape<T>& tape, const Tensor<T>& mesh, const std::vector<aero::OperatingCondition>& oc) const {
    return forward_impl(params_, tape, mesh, oc);
}

template <typename T>
template <typename Store>
Var Model<T>::forward_impl(Store& params, Tape<T>& tape, const Tensor<T>& mesh,
                           const std::vector<aero::OperatingCondition>& oc) const {
    const ModelConfig& c = config_;
    if (mesh.shape.size() != 4 || mesh.shape[1] != 3)
        throw ConfigError("model input must be [B, 3, H, W], got " + nn::shape_string(mesh.shape));
    const std::size_t batch = mesh.shape[0];
    const std::size_t height = mesh.shape[2];
    const std::size_t width = mesh.shape[3];
    if (batch == 0 || oc.size() != batch) throw ConfigError("model input needs one operating condition per sample");
    c.validate_input(height, width);

    auto p = [&](const std::string& name) { return tape.parameter(params[index_.at(name)]); };
    auto lin = [&](Var x, const std::string& name) { return nn::linear(tape, x, p(name + ".weight"), p(name + ".bias")); };

    Tensor<T> standardized(mesh.shape);
    const std::size_t plane = height * width;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t i = 0; i < plane; ++i) {
                const std::size_t k = (b * 3 + ch) * plane + i;
                standardized.data[k] =
                    static_cast<T>((static_cast<double>(mesh.data[k]) - stats_.mesh_mean[ch]) / stats_.mesh_std[ch]);
            }
    Var x = nn::patch_embed(tape, tape.constant(std::move(standardized)), p("embed.weight"), p("embed.bias"),
                            c.patch_h, c.patch_w);

    Tensor<T> features({batch, 2});
    for (std::size_t b = 0; b < batch; ++b) {
        oc[b].validate();
        const auto f = condition_features(oc[b]);
        features.data[2 * b] = static_cast<T>(f[0]);
        features.data[2 * b + 1] = static_cast<T>(f[1]);
    }
    Var cond = lin(nn::silu(tape, lin(tape.constant(std::move(features)), "cond.fc1")), "cond.fc2");
    Var cond_act = nn::silu(tape, cond);

    auto projection = [&](Var h, const std::string& name) {
        Var y = lin(h, name);
        if (lora_ && has_parameter(name + ".lora_down")) {
            Var low = nn::linear(tape, h, p(name + ".lora_down"));
            Var up = nn::linear(tape, low, p(name + ".lora_up"));
            y = nn::add(tape, y, nn::scale(tape, up, static_cast<T>(lora_->scale())));
        }
        return y;
    };

    auto block = [&](Var in, std::size_t stage, std::size_t b, std::size_t gh, std::size_t gw) {
        const std::size_t ch = c.stage_channels(stage);
        const std::string n = block_name(stage, b);
        Var mod = lin(cond_act, n + "mod");
        auto piece = [&](std::size_t k) { return nn::slice_cols(tape, mod, k * ch, ch); };
        const auto plan = nn::WindowPlan::make(gh, gw, c.window, b % 2 == 1);

        Var h = nn::modulate(tape, nn::layer_norm(tape, in), piece(0), piece(1));
        Var q = projection(h, n + "attn.q");
        Var k = lin(h, n + "attn.k");
        Var v = projection(h, n + "attn.v");
        Var bias = nn::relative_bias(tape, p(n + "attn.bias_mlp.fc1.weight"), p(n + "attn.bias_mlp.fc1.bias"),
                                     p(n + "attn.bias_mlp.fc2.weight"), p(n + "attn.bias_mlp.fc2.bias"),
                                     plan->win_h, plan->win_w);
        Var att = lin(nn::window_attention(tape, q, k, v, bias, plan, c.heads), n + "attn.proj");
        Var y = nn::gated_add(tape, in, piece(2), att);

        Var h2 = nn::modulate(tape, nn::layer_norm(tape, y), piece(3), piece(4));
        Var m = lin(nn::gelu(tape, lin(h2, n + "mlp.fc1")), n + "mlp.fc2");
        return nn::gated_add(tape, y, piece(5), m);
    };

    std::size_t gh = height / c.patch_h;
    std::size_t gw = width / c.patch_w;
    const std::size_t latent = c.latent_stage();
    std::vector<Var> skips;
    for (std::size_t s = 0; s < c.built_stages(); ++s) {
        const std::size_t ch = c.stage_channels(s);
        if (s > latent) {
            const std::string id = std::to_string(s);
            Var up = lin(x, "up." + id);
            x = nn::gather(tape, up, nn::shuffle_tokens_index(batch, gh, gw, ch, 2), Shape{batch * gh * gw * 4, ch});
            gh *= 2;
            gw *= 2;
            x = lin(nn::concat_cols(tape, x, skips.back()), "skip." + id);
            skips.pop_back();
        }
        for (std::size_t b = 0; b < c.depths[s]; ++b) x = block(x, s, b, gh, gw);
        if (s < latent) {
            skips.push_back(x);
            Var un = nn::gather(tape, x, nn::unshuffle_tokens_index(batch, gh, gw, ch, 2),
                                Shape{batch * (gh / 2) * (gw / 2), 4 * ch});
            x = lin(un, "down." + std::to_string(s));
            gh /= 2;
            gw /= 2;
        }
    }

    x = nn::layer_norm(tape, x);
    if (c.variant == Variant::surf) {
        Var out = lin(x, "head");
        return nn::gather(tape, out, nn::unpatch_index(batch, c.n_var, gh, gw, c.patch_h, c.patch_w),
                          Shape{batch, c.n_var, height, width});
    }
    Var pooled = nn::attention_pool(tape, lin(x, "pool.k"), lin(x, "pool.v"), p("pool.query"), batch);
    return lin(pooled, "head");
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& mesh, const std::vector<aero::OperatingCondition>& oc) const {
    Tape<T> tape(false);
    Tensor<T> out = tape.value(forward(tape, mesh, oc));
    if (config_.variant == Variant::surf) {
        const std::size_t plane = out.shape[2] * out.shape[3];
        for (std::size_t b = 0; b < out.shape[0]; ++b)
            for (std::size_t ch = 0; ch < config_.n_var; ++ch)
                for (std::size_t i = 0; i < plane; ++i) {
                    T& v = out.data[(b * config_.n_var + ch) * plane + i];
                    v = static_cast<T>(static_cast<double>(v) * stats_.flow_std[ch] + stats_.flow_mean[ch]);
                }
    } else {
        for (std::size_t b = 0; b < out.shape[0]; ++b)
            for (std::size_t k = 0; k < 3; ++k) {
                T& v = out.data[b * 3 + k];
                v = static_cast<T>(static_cast<double>(v) * stats_.coef_std[k] + stats_.coef_mean[k]);
            }
    }
    return out;
}

template <typename T>
void Model<T>::apply_lora(const LoRAConfig& lora, std::uint64_t seed) {
    if (lora_) throw ConfigError("LoRA adapters are already applied");
    if (lora.rank == 0) throw ConfigError("LoRA rank must be at least 1");
    std::mt19937_64 rng(seed);
    lora_ = lora;
    const std::size_t base = params_.size();
    for (std::size_t i = 0; i < base; ++i) {
        const std::string name = params_[i].name;
        for (const char* target : {".attn.q.weight", ".attn.v.weight"}) {
            const std::string suffix(target);
            if (name.size() < suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
                continue;
            const std::string stem = name.substr(0, name.size() - std::string(".weight").size());
            const std::size_t out = params_[i].value.shape[0];
            const std::size_t in = params_[i].value.shape[1];
            add(stem + ".lora_up", {out, lora.rank}, 1.0 / std::sqrt(static_cast<double>(lora.rank)), rng);
            add(stem + ".lora_down", {lora.rank, in}, 0.0, rng);
        }
    }
    set_trainable(TrainableSet::lora);
}

template <typename T>
void Model<T>::merge_lora() {
    if (!lora_) throw ConfigError("no LoRA adapters to merge");
    const double s = lora_->scale();
    const std::size_t r = lora_->rank;
    for (auto& param : params_) {
        const std::string& name = param.name;
        const std::string suffix = ".weight";
        if (!(name.ends_with(".attn.q.weight") || name.ends_with(".attn.v.weight"))) continue;
        const std::string stem = name.substr(0, name.size() - suffix.size());
        if (!has_parameter(stem + ".lora_up")) continue;
        const auto& up = parameter(stem + ".lora_up").value;
        const auto& down = parameter(stem + ".lora_down").value;
        const std::size_t out = param.value.shape[0], in = param.value.shape[1];
        for (std::size_t o = 0; o < out; ++o)
            for (std::size_t k = 0; k < in; ++k) {
                double acc = 0.0;
                for (std::size_t j = 0; j < r; ++j)
                    acc += static_cast<double>(up.data[o * r + j]) * static_cast<double>(down.data[j * in + k]);
                param.value.data[o * in + k] = static_cast<T>(static_cast<double>(param.value.data[o * in + k]) + s * acc);
            }
    }
    std::erase_if(params_, [](const nn::Parameter<T>& p) { return p.name.find(".lora_") != std::string::npos; });
    reindex();
    lora_.reset();
    set_trainable(TrainableSet::all);
}

template <typename T>
void Model<T>::set_trainable(TrainableSet set) {
    for (auto& p : params_) {
        switch (set) {
            case TrainableSet::all: p.trainable = true; break;
            case TrainableSet::none: p.trainable = false; break;
            case TrainableSet::attention: p.trainable = is_attention_projection(p.name); break;
            case TrainableSet::lora: p.trainable = p.name.find(".lora_") != std::string::npos; break;
        }
    }
}

template <typename T>
std::size_t Model<T>::param_count(bool trainable_only) const {
    std::size_t n = 0;
    for (const auto& p : params_)
        if (!trainable_only || p.trainable) n += p.value.size();
    return n;
}

template <typename T>
std::map<std::string, Tensor<double>> Model<T>::export_values() const {
    std::map<std::string, Tensor<double>> out;
    for (const auto& p : params_)
        out.emplace(p.name, Tensor<double>(p.value.shape, std::vector<double>(p.value.data.begin(), p.value.data.end())));
    return out;
}

template <typename T>
void Model<T>::import_values(const std::map<std::string, Tensor<double>>& values) {
    for (const auto& [name, tensor] : values) {
        if (!has_parameter(name)) {
            if (name.find(".lora_") != std::string::npos)
                throw ConfigError("tensor " + name + " is a LoRA adapter but the model has none applied");
            throw ConfigError("unexpected tensor " + name);
        }
    }
    for (auto& p : params_) {
        auto it = values.find(p.name);
        if (it == values.end()) throw ConfigError("missing tensor " + p.name);
        if (it->second.shape != p.value.shape)
            throw ConfigError("tensor " + p.name + " has shape " + nn::shape_string(it->second.shape) + ", expected " +
                              nn::shape_string(p.value.shape));
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value.data[i] = static_cast<T>(it->second.data[i]);
    }
}

template class Model<float>;
template class Model<double>;

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"hidden0", c.hidden0},     {"depths", c.depths},       {"patch", {c.patch_h, c.patch_w}},
                       {"window", c.window},       {"heads", c.heads},         {"mlp_ratio", c.mlp_ratio},
                       {"n_var", c.n_var},         {"n_cond", c.n_cond},       {"bias_hidden", c.bias_hidden},
                       {"variant", c.variant == Variant::surf ? "surf" : "coef"}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.hidden0 = j.value("hidden0", d.hidden0);
    c.depths = j.value("depths", d.depths);
    if (j.contains("patch")) {
        const auto& p = j.at("patch");
        if (!p.is_array() || p.size() != 2) throw ConfigError("patch must be [p_H, p_W]");
        c.patch_h = p[0].get<std::size_t>();
        c.patch_w = p[1].get<std::size_t>();
    } else {
        c.patch_h = d.patch_h;
        c.patch_w = d.patch_w;
    }
    c.window = j.value("window", d.window);
    c.heads = j.value("heads", d.heads);
    c.mlp_ratio = j.value("mlp_ratio", d.mlp_ratio);
    c.n_var = j.value("n_var", d.n_var);
    c.n_cond = j.value("n_cond", d.n_cond);
    c.bias_hidden = j.value("bias_hidden", d.bias_hidden);
    const std::string variant = j.value("variant", std::string("surf"));
    if (variant == "surf")
        c.variant = Variant::surf;
    else if (variant == "coef")
        c.variant = Variant::coef;
    else
        throw ConfigError("variant must be surf or coef, got " + variant);
}

void to_json(nlohmann::json& j, const Standardization& s) {
    j = nlohmann::json{{"mesh_mean", s.mesh_mean}, {"mesh_std", s.mesh_std}, {"flow_mean", s.flow_mean},
                       {"flow_std", s.flow_std},   {"coef_mean", s.coef_mean}, {"coef_std", s.coef_std}};
}

void from_json(const nlohmann::json& j, Standardization& s) {
    j.at("mesh_mean").get_to(s.mesh_mean);
    j.at("mesh_std").get_to(s.mesh_std);
    j.at("flow_mean").get_to(s.flow_mean);
    j.at("flow_std").get_to(s.flow_std);
    j.at("coef_mean").get_to(s.coef_mean);
    j.at("coef_std").get_to(s.coef_std);
}

void to_json(nlohmann::json& j, const LoRAConfig& l) { j = nlohmann::json{{"rank", l.rank}, {"alpha", l.alpha()}}; }

void from_json(const nlohmann::json& j, LoRAConfig& l) { l.rank = j.at("rank").get<std::size_t>(); }

}  // namespace aerotx::model
