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
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "aerotx/model.hpp"

namespace aerotx::service {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: "ATCK", u32 version, u64 header length, JSON header, f32 little-endian tensor
/// blob, u64 FNV-1a checksum of everything before it. The header holds the model config,
/// standardization, LoRA state, provenance and the tensor index (name, shape, byte offset).
///
/// Values are stored as f32, so a double-precision model is rounded on save.
template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const model::Model<T>& model, const nlohmann::json& provenance);

template <typename T>
model::Model<T> decode_checkpoint(std::span<const std::uint8_t> bytes, nlohmann::json* provenance = nullptr);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const model::Model<T>& model,
                     const nlohmann::json& provenance = nlohmann::json::object());

template <typename T>
model::Model<T> load_checkpoint(const std::filesystem::path& path, nlohmann::json* provenance = nullptr);

/// Header JSON only (checksum verified), for inspection.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) noexcept;

}  // namespace aerotx::service
