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

#include "aerotx/service/service.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <optional>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <spdlog/spdlog.h>

#include "aerotx/aero.hpp"
#include "aerotx/dataset.hpp"
#include "aerotx/version.hpp"

// After Eigen: <resolv.h> defines a macro named _res.
#include <httplib.h>

namespace aerotx::service {

using nlohmann::json;

namespace {

constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

struct FieldError {
    std::string field;
    std::string message;
};

HttpResult error_result(int status, const std::string& message, const std::vector<FieldError>& fields = {}) {
    json details = json::array();
    for (const auto& f : fields) details.push_back({{"field", f.field}, {"message", f.message}});
    return {status, {{"error", message}, {"details", details}}};
}

std::optional<json> parse_body(std::string_view body) {
    json j = json::parse(body.begin(), body.end(), nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
}

// Replaces one planform field of a valid baseline and validates it alone.
void check_planform_field(const std::string& key, double value) {
    geometry::PlanformParams p = geometry::baseline_planform();
    if (key == "sweep_le") p.sweep_le = value;
    else if (key == "aspect_ratio") p.aspect_ratio = value;
    else if (key == "taper_ratio") p.taper_ratio = value;
    else if (key == "kink_eta") p.kink_eta = value;
    else p.root_adjust = value;
    p.validate();
}

std::optional<geometry::WingShape> parse_geometry(const json& request, std::vector<FieldError>& errors) {
    if (!request.contains("geometry") || !request["geometry"].is_object()) {
        errors.push_back({"geometry", "geometry object is required"});
        return std::nullopt;
    }
    const json& g = request["geometry"];
    const std::size_t before = errors.size();
    geometry::WingShape shape;

    if (!g.contains("planform") || !g["planform"].is_object()) {
        errors.push_back({"geometry.planform", "planform object is required"});
    } else {
        for (const char* key : {"sweep_le", "aspect_ratio", "taper_ratio", "kink_eta", "root_adjust"}) {
            const std::string field = std::string("geometry.planform.") + key;
            const json& p = g["planform"];
            if (!p.contains(key) || !p[key].is_number()) {
                errors.push_back({field, "a number is required"});
                continue;
            }
            try {
                check_planform_field(key, p[key].get<double>());
            } catch (const Error& e) {
                errors.push_back({field, e.what()});
            }
        }
        if (errors.size() == before) {
            try {
                g["planform"].get_to(shape.planform);
                shape.planform.validate();
                (void)geometry::build_planform(shape.planform);
            } catch (const std::exception& e) {
                errors.push_back({"geometry.planform", e.what()});
            }
        }
    }

    const std::pair<const char*, geometry::SpanwiseDistribution*> dists[] = {{"thickness_dist", &shape.thickness},
                                                                             {"camber_dist", &shape.camber},
                                                                             {"dihedral_dist", &shape.dihedral},
                                                                             {"twist_dist", &shape.twist}};
    for (const auto& [key, dst] : dists) {
        if (!g.contains(key)) continue;
        try {
            g[key].get_to(*dst);
            dst->validate();
        } catch (const std::exception& e) {
            errors.push_back({std::string("geometry.") + key, e.what()});
        }
    }

    if (!g.contains("section_airfoils") || !g["section_airfoils"].is_array() || g["section_airfoils"].empty()) {
        errors.push_back({"geometry.section_airfoils", "a non-empty array of section airfoils is required"});
    } else {
        const json& secs = g["section_airfoils"];
        for (std::size_t i = 0; i < secs.size(); ++i) {
            const std::string field = "geometry.section_airfoils[" + std::to_string(i) + "]";
            try {
                geometry::SectionControl sc{secs[i].value("eta", 0.0), secs[i].at("airfoil").get<geometry::CstAirfoil>()};
                sc.airfoil.validate();
                shape.sections.push_back(sc);
            } catch (const std::exception& e) {
                errors.push_back({field, e.what()});
            }
        }
        if (errors.size() == before) {
            try {
                shape.validate();
            } catch (const Error& e) {
                errors.push_back({"geometry.section_airfoils", e.what()});
            }
        }
    }
    if (errors.size() != before) return std::nullopt;
    return shape;
}

std::vector<aero::OperatingCondition> parse_conditions(const json& request, std::vector<FieldError>& errors) {
    std::vector<aero::OperatingCondition> out;
    if (!request.contains("conditions") || !request["conditions"].is_array() || request["conditions"].empty()) {
        errors.push_back({"conditions", "a non-empty array of conditions is required"});
        return out;
    }
    const json& list = request["conditions"];
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string prefix = "conditions[" + std::to_string(i) + "].";
        aero::OperatingCondition oc;
        bool ok = true;
        for (const char* key : {"mach", "aoa_deg"}) {
            if (!list[i].is_object() || !list[i].contains(key) || !list[i][key].is_number()) {
                errors.push_back({prefix + key, "a number is required"});
                ok = false;
                continue;
            }
            const double v = list[i][key].get<double>();
            try {
                aero::OperatingCondition probe;
                (std::strcmp(key, "mach") == 0 ? probe.mach : probe.aoa_deg) = v;
                probe.validate();
                (std::strcmp(key, "mach") == 0 ? oc.mach : oc.aoa_deg) = v;
            } catch (const Error& e) {
                errors.push_back({prefix + key, e.what()});
                ok = false;
            }
        }
        if (ok) out.push_back(oc);
    }
    return out;
}

std::string encode_doubles(std::span<const double> values) {
    std::vector<float> f(values.begin(), values.end());
    return encode_f32(f);
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    using namespace boost::archive::iterators;
    using It = base64_from_binary<transform_width<const std::uint8_t*, 6, 8>>;
    std::string out(It(bytes.data()), It(bytes.data() + bytes.size()));
    out.append((3 - bytes.size() % 3) % 3, '=');
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4", text.size());
    std::size_t pad = 0;
    while (pad < 2 && pad < text.size() && text[text.size() - 1 - pad] == '=') ++pad;
    const std::string_view body = text.substr(0, text.size() - pad);
    for (std::size_t i = 0; i < body.size(); ++i)
        if (kAlphabet.find(body[i]) == std::string_view::npos) throw FormatError("invalid base64 character", i);

    using namespace boost::archive::iterators;
    using It = transform_width<binary_from_base64<const char*>, 8, 6>;
    std::vector<std::uint8_t> out;
    out.reserve(body.size() * 3 / 4);
    const std::size_t n = text.size() / 4 * 3 - pad;
    It it(body.data());
    for (std::size_t i = 0; i < n; ++i, ++it) out.push_back(static_cast<std::uint8_t>(*it));
    return out;
}

std::string encode_f32(std::span<const float> values) {
    std::vector<std::uint8_t> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t u;
        std::memcpy(&u, &values[i], 4);
        for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<std::uint8_t>(u >> (8 * b));
    }
    return base64_encode(bytes);
}

std::vector<float> decode_f32(std::string_view text) {
    const auto bytes = base64_decode(text);
    if (bytes.size() % 4 != 0) throw FormatError("f32 payload is not a multiple of 4 bytes", bytes.size());
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
        std::memcpy(&out[i], &u, 4);
    }
    return out;
}

PredictionService::PredictionService(model::Model<float> model, json provenance)
    : model_(std::move(model)), provenance_(std::move(provenance)) {
    if (model_.config().variant != model::Variant::surf)
        throw ConfigError("the service needs a surface-field model");
    if (model_.config().n_var != aero::kChannels)
        throw ConfigError("the service needs a model with " + std::to_string(aero::kChannels) + " output channels");
    if (provenance_.contains("resolution")) {
        const auto& r = provenance_["resolution"];
        resolution_.chord_cells = r.at(0).get<std::size_t>();
        resolution_.span_cells = r.at(1).get<std::size_t>();
    }
    resolution_.validate();
    model_.config().validate_input(resolution_.chord_cells, resolution_.span_cells);
}

HttpResult PredictionService::info() const {
    json j;
    j["version"] = kVersion;
    j["model"] = model_.config();
    j["stats"] = model_.standardization();
    j["parameters"] = model_.param_count();
    j["resolution"] = {resolution_.chord_cells, resolution_.span_cells};
    j["max_conditions"] = kMaxConditions;
    j["provenance"] = provenance_;
    return {200, j};
}

HttpResult PredictionService::defaults() const {
    return {200, json(dataset::baseline_wing())};
}

HttpResult PredictionService::mesh(std::string_view body) const {
    const auto start = std::chrono::steady_clock::now();
    const auto request = parse_body(body);
    if (!request || !request->is_object()) return error_result(400, "request body is not a JSON object");
    std::vector<FieldError> errors;
    auto shape = parse_geometry(*request, errors);
    if (!shape) return error_result(422, "invalid geometry", errors);
    geometry::SurfaceMesh m;
    try {
        m = geometry::build_surface_mesh(*shape, resolution_);
    } catch (const Error& e) {
        return error_result(422, "invalid geometry", {{"geometry", e.what()}});
    }
    json j;
    j["mesh_shape"] = {3, m.height, m.width};
    j["mesh"] = encode_doubles(m.cell_centers);
    j["timing_ms"] = elapsed_ms(start);
    return {200, j};
}

HttpResult PredictionService::predict(std::string_view body) const {
    const auto start = std::chrono::steady_clock::now();
    const auto request = parse_body(body);
    if (!request || !request->is_object()) return error_result(400, "request body is not a JSON object");
    if (request->contains("conditions") && (*request)["conditions"].is_array() &&
        (*request)["conditions"].size() > kMaxConditions)
        return error_result(413, "at most " + std::to_string(kMaxConditions) + " conditions per request");

    std::vector<FieldError> errors;
    auto shape = parse_geometry(*request, errors);
    auto conditions = parse_conditions(*request, errors);
    if (!errors.empty()) return error_result(422, "invalid request", errors);

    geometry::SurfaceMesh m;
    try {
        m = geometry::build_surface_mesh(*shape, resolution_);
    } catch (const Error& e) {
        return error_result(422, "invalid geometry", {{"geometry", e.what()}});
    }
    const double c_mac = geometry::build_planform(shape->planform).mean_aerodynamic_chord();
    const aero::ForceWeights weights = aero::force_weights(m, c_mac);

    const std::size_t cells = m.cells();
    const std::size_t b = conditions.size();
    nn::Tensor<float> input({b, 3, m.height, m.width});
    for (std::size_t k = 0; k < b; ++k)
        std::transform(m.cell_centers.begin(), m.cell_centers.end(), input.data.begin() + k * 3 * cells,
                       [](double v) { return static_cast<float>(v); });
    const nn::Tensor<float> out = model_.predict(input, conditions);

    json fields = json::array();
    json coefficients = json::array();
    for (std::size_t k = 0; k < b; ++k) {
        const float* base = out.ptr() + k * 3 * cells;
        aero::SurfaceFlow flow(m.height, m.width);
        std::copy(base, base + 3 * cells, flow.data.begin());
        fields.push_back({{"cp", encode_f32({base, cells})},
                          {"cf_tau", encode_f32({base + cells, cells})},
                          {"cf_z", encode_f32({base + 2 * cells, cells})}});
        const auto c = aero::integrate_coefficients(weights, flow, conditions[k].aoa_deg);
        coefficients.push_back({{"cl", c.cl}, {"cd", c.cd}, {"cmz", c.cmz}});
    }

    json j;
    j["mesh_shape"] = {3, m.height, m.width};
    j["field_shape"] = {m.height, m.width};
    j["mesh"] = encode_doubles(m.cell_centers);
    j["fields"] = std::move(fields);
    j["coefficients"] = std::move(coefficients);
    j["timing_ms"] = elapsed_ms(start);
    return {200, j};
}

struct HttpServer::Impl {
    explicit Impl(const PredictionService& s) : service(s) {}
    const PredictionService& service;
    httplib::Server server;
};

HttpServer::HttpServer(const PredictionService& service) : impl_(std::make_unique<Impl>(service)) {
    auto& srv = impl_->server;
    srv.set_payload_max_length(16u << 20);

    auto reply = [](httplib::Response& res, const HttpResult& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    const PredictionService& svc = impl_->service;
    srv.Get("/api/info", [&svc, reply](const httplib::Request&, httplib::Response& res) { reply(res, svc.info()); });
    srv.Get("/api/defaults",
            [&svc, reply](const httplib::Request&, httplib::Response& res) { reply(res, svc.defaults()); });
    srv.Post("/api/mesh",
             [&svc, reply](const httplib::Request& req, httplib::Response& res) { reply(res, svc.mesh(req.body)); });
    srv.Post("/api/predict", [&svc, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.predict(req.body));
    });

    srv.set_exception_handler([reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        spdlog::error("request failed: {}", what);
        reply(res, error_result(500, what));
    });
    srv.set_logger([](const httplib::Request& req, const httplib::Response& res) {
        spdlog::info("{} {} -> {}", req.method, req.path, res.status);
    });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    auto& srv = impl_->server;
    const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpServer::run() {
    if (!impl_->server.listen_after_bind()) throw Error("server stopped with an error");
}

void HttpServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void configure_logging() {
    const char* env = std::getenv("AT_LOG");
    if (env == nullptr || *env == '\0') {
        spdlog::set_level(spdlog::level::info);
        return;
    }
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string_view(env) != "off") {
        spdlog::set_level(spdlog::level::info);
        spdlog::warn("AT_LOG={} is not a log level; using info", env);
        return;
    }
    spdlog::set_level(level);
}

}  // namespace aerotx::service
