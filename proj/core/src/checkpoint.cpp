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

#include "aerotx/service/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "aerotx/error.hpp"

namespace aerotx::service {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t pos, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes[pos + static_cast<std::size_t>(i)]) << (8 * i);
    return v;
}

struct Parsed {
    nlohmann::json header;
    std::span<const std::uint8_t> blob;
};

Parsed parse(std::span<const std::uint8_t> bytes) {
    constexpr std::size_t fixed = 4 + 4 + 8;
    if (bytes.size() < fixed + 8) throw FormatError("checkpoint truncated: missing header", bytes.size());
    if (std::memcmp(bytes.data(), "ATCK", 4) != 0) throw FormatError("bad checkpoint magic, expected ATCK", 0);
    const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
    const std::uint64_t stored = get_le(bytes, bytes.size() - 8, 8);
    if (fnv1a(bytes.first(bytes.size() - 8)) != stored)
        throw FormatError("checkpoint checksum mismatch (file corrupted or modified)", bytes.size() - 8);
    const std::uint64_t json_len = get_le(bytes, 8, 8);
    if (json_len > bytes.size() - fixed - 8) throw FormatError("checkpoint header length out of range", 8);
    Parsed p;
    try {
        const auto* begin = reinterpret_cast<const char*>(bytes.data() + fixed);
        p.header = nlohmann::json::parse(begin, begin + json_len);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what(), fixed);
    }
    p.blob = bytes.subspan(fixed + json_len, bytes.size() - fixed - json_len - 8);
    return p;
}

}  // namespace

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const model::Model<T>& m, const nlohmann::json& provenance) {
    nlohmann::json index = nlohmann::json::array();
    std::vector<std::uint8_t> blob;
    for (const auto& p : m.parameters()) {
        index.push_back({{"name", p.name}, {"shape", p.value.shape}, {"offset", blob.size()}});
        for (T v : p.value.data) put_u32(blob, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    nlohmann::json header{{"config", m.config()},
                          {"stats", m.standardization()},
                          {"lora", m.lora() ? nlohmann::json(*m.lora()) : nlohmann::json(nullptr)},
                          {"provenance", provenance},
                          {"source_precision", sizeof(T) == 8 ? "f64" : "f32"},
                          {"tensors", index}};
    const std::string text = header.dump();
    std::vector<std::uint8_t> out;
    out.reserve(16 + text.size() + blob.size() + 8);
    for (char c : {'A', 'T', 'C', 'K'}) out.push_back(static_cast<std::uint8_t>(c));
    put_u32(out, kCheckpointVersion);
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), blob.begin(), blob.end());
    put_u64(out, fnv1a(out));
    return out;
}

template <typename T>
model::Model<T> decode_checkpoint(std::span<const std::uint8_t> bytes, nlohmann::json* provenance) {
    const Parsed p = parse(bytes);
    const auto& h = p.header;
    try {
        model::Model<T> m(h.at("config").get<model::ModelConfig>(), 0);
        m.set_standardization(h.at("stats").get<model::Standardization>());
        if (!h.at("lora").is_null()) m.apply_lora(h.at("lora").get<model::LoRAConfig>(), 0);

        std::map<std::string, nn::Tensor<double>> values;
        for (const auto& entry : h.at("tensors")) {
            const auto name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<nn::Shape>();
            const auto offset = entry.at("offset").get<std::size_t>();
            const std::size_t count = nn::shape_size(shape);
            if (values.contains(name)) throw FormatError("tensor " + name + " appears twice in the checkpoint index");
            if (offset % 4 != 0 || offset > p.blob.size() || count * 4 > p.blob.size() - offset)
                throw FormatError("tensor " + name + " lies outside the checkpoint blob");
            nn::Tensor<double> t(shape);
            for (std::size_t i = 0; i < count; ++i)
                t.data[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p.blob, offset + 4 * i, 4)));
            values.emplace(name, std::move(t));
        }
        m.import_values(values);
        if (provenance) *provenance = h.value("provenance", nlohmann::json::object());
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const model::Model<T>& m, const nlohmann::json& provenance) {
    const auto bytes = encode_checkpoint(m, provenance);
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

template <typename T>
model::Model<T> load_checkpoint(const std::filesystem::path& path, nlohmann::json* provenance) {
    const auto bytes = read_file(path);
    return decode_checkpoint<T>(bytes, provenance);
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return parse(bytes).header;
}

template std::vector<std::uint8_t> encode_checkpoint<float>(const model::Model<float>&, const nlohmann::json&);
template std::vector<std::uint8_t> encode_checkpoint<double>(const model::Model<double>&, const nlohmann::json&);
template model::Model<float> decode_checkpoint<float>(std::span<const std::uint8_t>, nlohmann::json*);
template model::Model<double> decode_checkpoint<double>(std::span<const std::uint8_t>, nlohmann::json*);
template void save_checkpoint<float>(const std::filesystem::path&, const model::Model<float>&, const nlohmann::json&);
template void save_checkpoint<double>(const std::filesystem::path&, const model::Model<double>&, const nlohmann::json&);
template model::Model<float> load_checkpoint<float>(const std::filesystem::path&, nlohmann::json*);
template model::Model<double> load_checkpoint<double>(const std::filesystem::path&, nlohmann::json*);

}  // namespace aerotx::service
