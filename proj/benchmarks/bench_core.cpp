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

#include <benchmark/benchmark.h>

#include <random>

#include "aerotx/aero.hpp"
#include "aerotx/dataset.hpp"
#include "aerotx/model.hpp"
#include "aerotx/nn/ops.hpp"
#include "aerotx/service/service.hpp"
#include "aerotx/training.hpp"

using namespace aerotx;

namespace {

geometry::MeshResolution resolution(const benchmark::State& state) {
    return {static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1))};
}

nn::Tensor<float> random_tensor(nn::Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    nn::Tensor<float> t(std::move(shape));
    for (auto& v : t.data) v = u(rng);
    return t;
}

model::ModelConfig toy() {
    model::ModelConfig c;
    c.hidden0 = 8;
    c.depths = {1, 1, 1, 1, 1};
    return c;
}

void BM_SurfaceMesh(benchmark::State& state) {
    const auto wing = dataset::baseline_wing();
    for (auto _ : state) benchmark::DoNotOptimize(geometry::build_surface_mesh(wing, resolution(state)));
}
BENCHMARK(BM_SurfaceMesh)->Args({32, 16})->Args({256, 128})->Unit(benchmark::kMicrosecond);

void BM_OracleFlow(benchmark::State& state) {
    const auto wing = dataset::baseline_wing();
    const auto mesh = geometry::build_surface_mesh(wing, resolution(state));
    for (auto _ : state) benchmark::DoNotOptimize(aero::oracle_flow(mesh, wing, {0.85, 2.0}));
}
BENCHMARK(BM_OracleFlow)->Args({32, 16})->Args({256, 128})->Unit(benchmark::kMicrosecond);

void BM_IntegrateCoefficients(benchmark::State& state) {
    const auto wing = dataset::baseline_wing();
    const auto mesh = geometry::build_surface_mesh(wing, resolution(state));
    const auto flow = aero::oracle_flow(mesh, wing, {0.85, 2.0});
    const auto weights = aero::force_weights(mesh, geometry::build_planform(wing.planform).mean_aerodynamic_chord());
    for (auto _ : state) benchmark::DoNotOptimize(aero::integrate_coefficients(weights, flow, 2.0));
}
BENCHMARK(BM_IntegrateCoefficients)->Args({256, 128})->Unit(benchmark::kMicrosecond);

void BM_WindowAttention(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    const std::size_t c = 64, heads = 8;
    const auto plan = nn::WindowPlan::make(side, side, 8, true);
    const auto q = random_tensor({side * side, c}, 1), k = random_tensor({side * side, c}, 2),
               v = random_tensor({side * side, c}, 3), bias = random_tensor({plan->bias_rows(), heads}, 4);
    for (auto _ : state) {
        nn::Tape<float> tape(false);
        benchmark::DoNotOptimize(tape.value(nn::window_attention(tape, tape.constant(q), tape.constant(k),
                                                                 tape.constant(v), tape.constant(bias), plan, heads)));
    }
}
BENCHMARK(BM_WindowAttention)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_ToyTrainStep(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    model::Model<float> m(toy(), 1);
    const auto mesh = random_tensor({batch, 3, 32, 16}, 5);
    const auto truth = random_tensor({batch, 3, 32, 16}, 6);
    const std::vector<aero::OperatingCondition> oc(batch, {0.85, 2.0});
    for (auto _ : state) {
        nn::Tape<float> tape(true);
        nn::Var loss = training::surface_loss(tape, m.forward(tape, mesh, oc), tape.constant(truth));
        tape.backward(loss);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
}
BENCHMARK(BM_ToyTrainStep)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_SmallInference(benchmark::State& state) {
    model::Model<float> m(model::ModelConfig::small(), 1);
    const auto mesh = random_tensor({1, 3, 256, 128}, 7);
    for (auto _ : state) benchmark::DoNotOptimize(m.predict(mesh, {{0.85, 2.0}}));
}
BENCHMARK(BM_SmallInference)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_EncodeF32(benchmark::State& state) {
    const auto values = random_tensor({256 * 128}, 8);
    for (auto _ : state) benchmark::DoNotOptimize(service::encode_f32(values.data));
}
BENCHMARK(BM_EncodeF32)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
