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
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aerotx/aero.hpp"
#include "aerotx/dataset.hpp"
#include "aerotx/model.hpp"
#include "aerotx/nn/tape.hpp"

namespace aerotx::training {

enum class Strategy { pretrain, finetune_full, finetune_attn, finetune_lora };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct TrainConfig {
    std::size_t batch_size = 16;
    std::size_t total_steps = 1000;
    double lr_max = 1e-3;
    double lr_start_frac = 0.04;
    double lr_end_frac = 0.001;
    double clip_norm = 1.0;
    double lambda_coef = 0.0;
    std::uint64_t seed = 0;
    Strategy strategy = Strategy::pretrain;
    std::size_t lora_rank = 4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    std::size_t log_every = 100;

    void validate() const;
    static TrainConfig pretrain_defaults();
    static TrainConfig finetune_defaults();
};

struct BudgetReport {
    double gamma = 0.0;
    double sample_gen_time_per_10 = 0.0;
    double train_time_per_1k_steps = 0.0;
};

/// Linear ramp start_frac -> 1 over the first half, cosine decay 1 -> end_frac over the second.
double one_cycle_lr(std::size_t step, std::size_t total, double lr_max, double start_frac, double end_frac);

/// Global L2 norm of the trainable gradients, scaled down to `max_norm` if larger.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::vector<nn::Parameter<T>>& params, double max_norm);

/// Decoupled weight decay Adam. Moments are keyed by parameter name.
template <typename T>
class AdamW {
public:
    AdamW(double beta1, double beta2, double eps, double weight_decay)
        : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

    void step(std::vector<nn::Parameter<T>>& params, double lr);
    std::size_t steps() const noexcept { return t_; }

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };
    double beta1_, beta2_, eps_, weight_decay_;
    std::size_t t_ = 0;
    std::map<std::string, Moments> state_;
};

/// Mean over cells of the squared error summed over channels. pred, truth: [B, 3, H, W].
template <typename T>
nn::Var surface_loss(nn::Tape<T>& tape, nn::Var pred, nn::Var truth);

/// MSE of C_L plus MSE of C_D, both integrated from physical flows.
/// pred_phys: [B, 3, H, W]; weights: [B, 2, 3 H W] (lift row, drag row); truth_phys: [B, 3, H, W].
template <typename T>
nn::Var coefficient_loss(nn::Tape<T>& tape, nn::Var pred_phys, std::shared_ptr<const nn::Tensor<T>> weights,
                         const nn::Tensor<T>& truth_phys);

/// L_surf + lambda L_coef on a standardized prediction.
template <typename T>
nn::Var total_loss(nn::Tape<T>& tape, nn::Var pred_std, const nn::Tensor<T>& truth_std,
                   const model::Standardization& stats, std::shared_ptr<const nn::Tensor<T>> weights,
                   const nn::Tensor<T>& truth_phys, double lambda);

/// Records of a dataset plus the per-shape integration weights they need.
class TrainingSet {
public:
    TrainingSet(const dataset::Dataset& data, std::vector<std::size_t> indices);

    std::size_t size() const noexcept { return indices_.size(); }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    const dataset::SampleRecord& record(std::size_t i) const { return data_->records[indices_.at(i)]; }
    const std::vector<std::size_t>& indices() const noexcept { return indices_; }
    const aero::ForceWeights& forces(std::size_t i) const { return forces_.at(record(i).shape_id); }
    const dataset::Dataset& data() const noexcept { return *data_; }

private:
    const dataset::Dataset* data_;
    std::vector<std::size_t> indices_;
    std::map<std::uint32_t, aero::ForceWeights> forces_;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
};

struct TrainResult {
    std::size_t steps = 0;
    double seconds = 0.0;
    double final_loss = 0.0;
    std::vector<nlohmann::json> history;
};

/// Raised when the loss stops being finite; the model holds the last good parameters.
class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& what, std::size_t step) : Error(what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

using LogSink = std::function<void(const nlohmann::json&)>;

/// Runs cfg.total_steps optimizer steps. The model's standardization must already be set.
template <typename T>
TrainResult train(model::Model<T>& model, const TrainingSet& data, const TrainConfig& cfg, const LogSink& log = {});

struct Evaluation {
    aero::FlowMetrics flow;
    aero::CoefficientMetrics coef;
    std::size_t samples = 0;
};

template <typename T>
Evaluation evaluate(const model::Model<T>& model, const TrainingSet& data, std::size_t batch_size = 16);

/// Fold metrics and their mean and (population) standard deviation.
struct CrossValidation {
    std::vector<std::map<std::string, double>> folds;
    std::map<std::string, double> mean;
    std::map<std::string, double> stddev;
};

using FoldRunner =
    std::function<std::map<std::string, double>(std::span<const std::size_t> train, std::span<const std::size_t> test)>;

CrossValidation cross_validate(std::span<const dataset::SampleRecord> records, std::size_t folds, std::uint64_t seed,
                               dataset::Granularity granularity, const FoldRunner& runner);

BudgetReport budget_report(double sample_gen_time_per_10, double train_time_per_1k_steps);

nlohmann::json to_json(const Evaluation& e);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const BudgetReport& b);

extern template double clip_grad_norm<float>(std::vector<nn::Parameter<float>>&, double);
extern template double clip_grad_norm<double>(std::vector<nn::Parameter<double>>&, double);
extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace aerotx::training
