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

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aerotx/aero.hpp"
#include "aerotx/nn/tape.hpp"

namespace aerotx::model {

enum class Variant { surf, coef };

/// Architecture hyperparameters. Stage s (0-based) of the encoder works on a token grid
/// downsampled 2^s times with hidden0 * 2^s channels; the decoder mirrors the encoder.
struct ModelConfig {
    std::size_t hidden0 = 16;
    std::vector<std::size_t> depths{2, 5, 8, 5, 2};
    std::size_t patch_h = 4;
    std::size_t patch_w = 4;
    std::size_t window = 8;
    std::size_t heads = 8;
    std::size_t mlp_ratio = 4;
    std::size_t n_var = 3;
    std::size_t n_cond = 2;
    std::size_t bias_hidden = 64;
    Variant variant = Variant::surf;

    std::size_t stages() const noexcept { return depths.size(); }
    std::size_t latent_stage() const noexcept { return depths.size() / 2; }
    std::size_t stage_channels(std::size_t stage) const;
    std::size_t cond_dim() const noexcept { return 4 * hidden0; }
    /// Stages that are built: all for surf, encoder and latent for coef.
    std::size_t built_stages() const noexcept { return variant == Variant::surf ? stages() : latent_stage() + 1; }

    void validate() const;
    /// Throws ConfigError unless an H x W input fits the patching and downsampling.
    void validate_input(std::size_t height, std::size_t width) const;

    static ModelConfig small();
    static ModelConfig medium();
    static ModelConfig large();
};

struct LoRAConfig {
    std::size_t rank = 4;
    double alpha() const noexcept { return 2.0 * static_cast<double>(rank); }
    double scale() const noexcept { return alpha() / static_cast<double>(rank); }
};

/// Per-channel affine standardization of inputs and targets.
struct Standardization {
    std::array<double, 3> mesh_mean{0, 0, 0};
    std::array<double, 3> mesh_std{1, 1, 1};
    std::array<double, 3> flow_mean{0, 0, 0};
    std::array<double, 3> flow_std{1, 1, 1};
    std::array<double, 3> coef_mean{0, 0, 0};
    std::array<double, 3> coef_std{1, 1, 1};
};

/// Which parameters receive gradients.
enum class TrainableSet { all, attention, lora, none };

/// Normalized condition features fed to the condition MLP.
std::array<double, 2> condition_features(const aero::OperatingCondition& oc);

/// Surrogate network. Parameters live in a flat list in construction order, so the order
/// and the random initial values depend only on (config, seed).
template <typename T>
class Model {
public:
    Model(ModelConfig config, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return config_; }
    const Standardization& standardization() const noexcept { return stats_; }
    void set_standardization(const Standardization& stats) { stats_ = stats; }

    std::vector<nn::Parameter<T>>& parameters() noexcept { return params_; }
    const std::vector<nn::Parameter<T>>& parameters() const noexcept { return params_; }
    nn::Parameter<T>& parameter(const std::string& name);
    const nn::Parameter<T>& parameter(const std::string& name) const;
    bool has_parameter(const std::string& name) const { return index_.contains(name); }

    /// Standardized prediction: surf -> [B, n_var, H, W], coef -> [B, 3].
    /// `mesh` holds raw cell centres [B, 3, H, W]; one condition per batch entry.
    nn::Var forward(nn::Tape<T>& tape, const nn::Tensor<T>& mesh, const std::vector<aero::OperatingCondition>& oc);
    nn::Var forward(nn::Tape<T>& tape, const nn::Tensor<T>& mesh,
                    const std::vector<aero::OperatingCondition>& oc) const;

    /// Inference in physical units: flows [B, n_var, H, W] or coefficients [B, 3].
    nn::Tensor<T> predict(const nn::Tensor<T>& mesh, const std::vector<aero::OperatingCondition>& oc) const;

    void apply_lora(const LoRAConfig& lora, std::uint64_t seed);
    void merge_lora();
    bool has_lora() const noexcept { return lora_.has_value(); }
    std::optional<LoRAConfig> lora() const noexcept { return lora_; }

    void set_trainable(TrainableSet set);
    std::size_t param_count(bool trainable_only = false) const;

    /// Values by name in double precision, and the reverse (shapes must match).
    std::map<std::string, nn::Tensor<double>> export_values() const;
    void import_values(const std::map<std::string, nn::Tensor<double>>& values);

private:
    template <typename Store>
    nn::Var forward_impl(Store& params, nn::Tape<T>& tape, const nn::Tensor<T>& mesh,
                         const std::vector<aero::OperatingCondition>& oc) const;

    template <typename Rng>
    void add(const std::string& name, nn::Shape shape, double bound, Rng& rng);
    template <typename Rng>
    void add_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool zero = false);
    void reindex();

    ModelConfig config_;
    Standardization stats_;
    std::vector<nn::Parameter<T>> params_;
    std::map<std::string, std::size_t> index_;
    std::optional<LoRAConfig> lora_;
};

extern template class Model<float>;
extern template class Model<double>;

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const Standardization& s);
void from_json(const nlohmann::json& j, Standardization& s);
void to_json(nlohmann::json& j, const LoRAConfig& l);
void from_json(const nlohmann::json& j, LoRAConfig& l);

}  // namespace aerotx::model
