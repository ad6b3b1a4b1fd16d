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

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aerotx/geometry.hpp"
#include "aerotx/model.hpp"

namespace aerotx::service {

/// Base64 of little-endian f32 values, the transport encoding of surface arrays.
std::string encode_f32(std::span<const float> values);
std::vector<float> decode_f32(std::string_view text);
std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

struct HttpResult {
    int status = 200;
    nlohmann::json body;
};

/// Request handlers over an immutable model; safe to call concurrently.
class PredictionService {
public:
    static constexpr std::size_t kMaxConditions = 32;

    /// `provenance` may carry "resolution": [chord_cells, span_cells]; the default is 256 x 128.
    PredictionService(model::Model<float> model, nlohmann::json provenance);

    const geometry::MeshResolution& resolution() const noexcept { return resolution_; }
    const model::Model<float>& model() const noexcept { return model_; }

    HttpResult info() const;
    HttpResult defaults() const;
    HttpResult mesh(std::string_view body) const;
    HttpResult predict(std::string_view body) const;

private:
    model::Model<float> model_;
    nlohmann::json provenance_;
    geometry::MeshResolution resolution_;
};

/// HTTP/1.1 front end for a PredictionService.
class HttpServer {
public:
    explicit HttpServer(const PredictionService& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds to `port` (0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); blocks.
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Sets the global log level from AT_LOG (trace, debug, info, warn, error, off).
void configure_logging();

}  // namespace aerotx::service
