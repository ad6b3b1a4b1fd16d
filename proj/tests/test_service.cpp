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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "aerotx/aero.hpp"
#include "aerotx/dataset.hpp"
#include "aerotx/service/checkpoint.hpp"
#include "aerotx/service/service.hpp"

#include <httplib.h>

using namespace aerotx;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

model::ModelConfig toy() {
    model::ModelConfig c;
    c.hidden0 = 8;
    c.depths = {1, 1, 1, 1, 1};
    c.heads = 2;
    return c;
}

template <typename T>
model::Model<T> trained_looking_model(std::uint64_t seed) {
    model::Model<T> m(toy(), seed);
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto& p : m.parameters())
        if (p.name.find(".mod.") != std::string::npos)
            for (auto& v : p.value.data) v = static_cast<T>(u(rng));
    model::Standardization s;
    s.mesh_mean = {0.5, 0.3, 0.02};
    s.mesh_std = {0.3, 0.2, 0.05};
    s.flow_mean = {-0.2, 0.003, 0.0};
    s.flow_std = {0.4, 0.001, 0.0005};
    m.set_standardization(s);
    return m;
}

const service::PredictionService& svc() {
    static const service::PredictionService s(trained_looking_model<float>(3), json{{"resolution", {32, 16}}});
    return s;
}

json request(const json& geometry, std::vector<std::pair<double, double>> conditions) {
    json list = json::array();
    for (auto [m, a] : conditions) list.push_back({{"mach", m}, {"aoa_deg", a}});
    return {{"geometry", geometry}, {"conditions", list}};
}

json defaults() { return svc().defaults().body; }

std::vector<std::string> error_fields(const service::HttpResult& r) {
    std::vector<std::string> out;
    for (const auto& d : r.body.at("details")) out.push_back(d.at("field").get<std::string>());
    return out;
}

bool has_field(const service::HttpResult& r, const std::string& field) {
    const auto f = error_fields(r);
    return std::find(f.begin(), f.end(), field) != f.end();
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Re-integrates the returned fields on an independently built mesh and compares them
// with the returned coefficients.
void expect_consistent(const json& geometry, const std::vector<std::pair<double, double>>& conditions,
                       const json& body, double tol) {
    const auto shape = geometry.get<geometry::WingShape>();
    const auto mesh = geometry::build_surface_mesh(shape, {32, 16});
    const double c_mac = geometry::build_planform(shape.planform).mean_aerodynamic_chord();
    ASSERT_EQ(body.at("mesh_shape"), json({3, 32, 16}));
    ASSERT_EQ(body.at("field_shape"), json({32, 16}));
    const auto centers = service::decode_f32(body.at("mesh").get<std::string>());
    ASSERT_EQ(centers.size(), 3u * 32 * 16);
    for (std::size_t i = 0; i < centers.size(); ++i) ASSERT_EQ(centers[i], static_cast<float>(mesh.cell_centers[i]));
    const auto& fields = body.at("fields");
    const auto& coefs = body.at("coefficients");
    ASSERT_EQ(fields.size(), conditions.size());
    ASSERT_EQ(coefs.size(), conditions.size());
    for (std::size_t k = 0; k < fields.size(); ++k) {
        aero::SurfaceFlow flow(32, 16);
        std::size_t offset = 0;
        for (const char* name : {"cp", "cf_tau", "cf_z"}) {
            const auto v = service::decode_f32(fields[k].at(name).get<std::string>());
            ASSERT_EQ(v.size(), 32u * 16);
            for (float x : v) flow.data[offset++] = x;
        }
        const auto [mach, aoa] = conditions[k];
        const auto c = aero::integrate_coefficients(mesh, c_mac, flow, {mach, aoa});
        EXPECT_NEAR(coefs[k].at("cl").get<double>(), c.cl, tol);
        EXPECT_NEAR(coefs[k].at("cd").get<double>(), c.cd, tol);
        EXPECT_NEAR(coefs[k].at("cmz").get<double>(), c.cmz, tol);
    }
}

}  // namespace

TEST(Base64, MatchesFixture) {
    std::ifstream in(fs::path(AEROTX_FIXTURE_DIR) / "f32_base64.json");
    const json fx = json::parse(in);
    std::vector<float> values;
    for (double v : fx.at("values")) values.push_back(static_cast<float>(v));
    EXPECT_EQ(service::encode_f32(values), fx.at("base64").get<std::string>());
    EXPECT_EQ(service::decode_f32(fx.at("base64").get<std::string>()), values);
    for (const auto& v : fx.at("bytes")) {
        const auto raw = v.at("raw").get<std::string>();
        const std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
        EXPECT_EQ(service::base64_encode(bytes), v.at("base64").get<std::string>());
        EXPECT_EQ(service::base64_decode(v.at("base64").get<std::string>()), bytes);
    }
}

TEST(Base64, RoundTripAndRejectsMalformedInput) {
    std::mt19937_64 rng(1);
    for (std::size_t n = 0; n < 40; ++n) {
        std::vector<std::uint8_t> bytes(n);
        for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
        EXPECT_EQ(service::base64_decode(service::base64_encode(bytes)), bytes);
    }
    EXPECT_THROW(service::base64_decode("abc"), FormatError);
    EXPECT_THROW(service::base64_decode("ab!d"), FormatError);
    EXPECT_THROW(service::decode_f32("Zm8="), FormatError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto m = trained_looking_model<float>(4);
    const json prov{{"seed", 4}, {"steps", 0}};
    const auto bytes = service::encode_checkpoint(m, prov);
    json back_prov;
    const auto back = service::decode_checkpoint<float>(bytes, &back_prov);
    EXPECT_EQ(back_prov.at("seed"), 4);
    EXPECT_EQ(nlohmann::json(back.config()), nlohmann::json(m.config()));
    EXPECT_EQ(nlohmann::json(back.standardization()), nlohmann::json(m.standardization()));
    nn::Tensor<float> mesh({1, 3, 32, 16});
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(0, 1);
    for (auto& v : mesh.data) v = u(rng);
    EXPECT_EQ(m.predict(mesh, {{0.8, 2.0}}).data, back.predict(mesh, {{0.8, 2.0}}).data);
    EXPECT_EQ(service::encode_checkpoint(back, back_prov), bytes);
}

TEST(Checkpoint, TamperedBytesAreRejected) {
    const auto bytes = service::encode_checkpoint(trained_looking_model<float>(4), json::object());
    for (std::size_t pos : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
        auto bad = bytes;
        bad[pos] ^= 0x01;
        EXPECT_THROW(service::decode_checkpoint<float>(bad), Error) << pos;
    }
    EXPECT_THROW(service::decode_checkpoint<float>(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 30)), Error);
}

TEST(Checkpoint, DoubleModelLoadsIntoFloatByRounding) {
    const auto m = trained_looking_model<double>(6);
    const fs::path path = fs::temp_directory_path() / ("aerotx_ckpt_" + std::to_string(::getpid()) + ".atck");
    service::save_checkpoint(path, m, json{{"precision", "f64"}});
    const auto f = service::load_checkpoint<float>(path);
    const auto d = service::load_checkpoint<double>(path);
    const auto header = service::read_checkpoint_header(path);
    fs::remove(path);
    EXPECT_TRUE(header.contains("tensors"));
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
        const auto& src = m.parameters()[i];
        ASSERT_EQ(f.parameters()[i].name, src.name);
        for (std::size_t k = 0; k < src.value.size(); ++k) {
            const float rounded = static_cast<float>(src.value.data[k]);
            ASSERT_EQ(f.parameters()[i].value.data[k], rounded);
            ASSERT_EQ(d.parameters()[i].value.data[k], static_cast<double>(rounded));
        }
    }
}

TEST(Checkpoint, LoraStateSurvives) {
    auto m = trained_looking_model<float>(7);
    m.apply_lora({2}, 8);
    const auto back = service::decode_checkpoint<float>(service::encode_checkpoint(m, json::object()));
    EXPECT_TRUE(back.has_lora());
    EXPECT_EQ(back.lora()->rank, 2u);
    EXPECT_EQ(back.param_count(), m.param_count());
}

TEST(Service, RejectsCoefficientModels) {
    auto cfg = toy();
    cfg.variant = model::Variant::coef;
    EXPECT_THROW(service::PredictionService(model::Model<float>(cfg, 1), json::object()), ConfigError);
    EXPECT_THROW(service::PredictionService(model::Model<float>(toy(), 1), json{{"resolution", {30, 16}}}),
                 ConfigError);
}

TEST(Service, InfoIsStable) {
    const auto a = svc().info(), b = svc().info();
    EXPECT_EQ(a.status, 200);
    EXPECT_EQ(a.body, b.body);
    EXPECT_EQ(a.body.at("resolution"), json({32, 16}));
    EXPECT_EQ(a.body.at("max_conditions"), 32);
    EXPECT_TRUE(a.body.contains("version"));
    EXPECT_EQ(a.body.at("parameters"), svc().model().param_count());
}

TEST(Service, DefaultsAreTheBaselineWing) {
    const auto r = svc().defaults();
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body, json(dataset::baseline_wing()));
    EXPECT_NO_THROW(r.body.get<geometry::WingShape>().validate());
}

TEST(Service, PredictDefaultsIsConsistent) {
    const auto r = svc().predict(request(defaults(), {{0.85, 2.0}}).dump());
    ASSERT_EQ(r.status, 200) << r.body.dump();
    expect_consistent(defaults(), {{0.85, 2.0}}, r.body, 1e-5);
    EXPECT_GE(r.body.at("timing_ms").get<double>(), 0.0);
}

TEST(Service, PredictManyConditionsAndRandomGeometries) {
    const auto space = dataset::DesignSpace::finetune_like();
    dataset::Rng rng(9);
    for (int i = 0; i < 3; ++i) {
        const json g = dataset::sample_shape(space, rng);
        const std::vector<std::pair<double, double>> oc{{0.75, -2.0}, {0.8, 1.0}, {0.9, 4.0}};
        const auto r = svc().predict(request(g, oc).dump());
        ASSERT_EQ(r.status, 200) << r.body.dump();
        expect_consistent(g, oc, r.body, 1e-5);
    }
}

TEST(Service, InvalidInputs) {
    auto r = svc().predict(request(defaults(), {{1.2, 2.0}}).dump());
    EXPECT_EQ(r.status, 422);
    EXPECT_TRUE(has_field(r, "conditions[0].mach"));

    r = svc().predict(request(defaults(), {{0.8, 2.0}, {0.8, 90.0}}).dump());
    EXPECT_EQ(r.status, 422);
    EXPECT_TRUE(has_field(r, "conditions[1].aoa_deg"));

    json g = defaults();
    g["planform"]["taper_ratio"] = -0.5;
    r = svc().predict(request(g, {{0.8, 2.0}}).dump());
    EXPECT_EQ(r.status, 422);
    EXPECT_TRUE(has_field(r, "geometry.planform.taper_ratio"));

    g = defaults();
    g["planform"]["aspect_ratio"] = "wide";
    r = svc().mesh(json{{"geometry", g}}.dump());
    EXPECT_EQ(r.status, 422);
    EXPECT_TRUE(has_field(r, "geometry.planform.aspect_ratio"));

    g = defaults();
    g.erase("planform");
    EXPECT_EQ(svc().predict(request(g, {{0.8, 2.0}}).dump()).status, 422);
    EXPECT_EQ(svc().predict(request(defaults(), {}).dump()).status, 422);
    EXPECT_EQ(svc().predict("{not json").status, 400);
    EXPECT_EQ(svc().predict("[1,2]").status, 400);
}

TEST(Service, TooManyConditions) {
    std::vector<std::pair<double, double>> many(33, {0.8, 2.0});
    const auto r = svc().predict(request(defaults(), many).dump());
    EXPECT_EQ(r.status, 413);
    many.resize(32);
    many[5] = {2.0, 2.0};
    EXPECT_EQ(svc().predict(request(defaults(), many).dump()).status, 422);
}

TEST(Service, MeshEndpoint) {
    const auto r = svc().mesh(json{{"geometry", defaults()}}.dump());
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body.at("mesh_shape"), json({3, 32, 16}));
    const auto mesh = geometry::build_surface_mesh(dataset::baseline_wing(), {32, 16});
    const auto centers = service::decode_f32(r.body.at("mesh").get<std::string>());
    ASSERT_EQ(centers.size(), mesh.cell_centers.size());
    for (std::size_t i = 0; i < centers.size(); ++i) EXPECT_EQ(centers[i], static_cast<float>(mesh.cell_centers[i]));
}

TEST(Service, ConcurrentIdenticalRequestsAgree) {
    const std::string body = request(defaults(), {{0.82, 3.0}}).dump();
    service::HttpResult a, b;
    std::thread t1([&] { a = svc().predict(body); });
    std::thread t2([&] { b = svc().predict(body); });
    t1.join();
    t2.join();
    a.body.erase("timing_ms");
    b.body.erase("timing_ms");
    EXPECT_EQ(a.body, b.body);
}

TEST(Http, LiveServer) {
    service::HttpServer server(svc());
    const int port = server.bind("127.0.0.1", 0);
    ASSERT_GT(port, 0);
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

    auto info = client.Get("/api/info");
    ASSERT_TRUE(info);
    EXPECT_EQ(info->status, 200);
    EXPECT_EQ(json::parse(info->body), svc().info().body);

    auto defaults_res = client.Get("/api/defaults");
    ASSERT_TRUE(defaults_res);
    const json g = json::parse(defaults_res->body);

    auto pred = client.Post("/api/predict", request(g, {{0.85, 2.0}}).dump(), "application/json");
    ASSERT_TRUE(pred);
    EXPECT_EQ(pred->status, 200);
    expect_consistent(g, {{0.85, 2.0}}, json::parse(pred->body), 1e-5);

    auto bad = client.Post("/api/predict", request(g, {{1.2, 2.0}}).dump(), "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 422);

    auto mesh = client.Post("/api/mesh", json{{"geometry", g}}.dump(), "application/json");
    ASSERT_TRUE(mesh);
    EXPECT_EQ(mesh->status, 200);

    auto missing = client.Get("/api/nothing");
    ASSERT_TRUE(missing);
    EXPECT_EQ(missing->status, 404);
}
