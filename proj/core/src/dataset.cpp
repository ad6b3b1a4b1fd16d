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

#include "aerotx/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "aerotx/error.hpp"

namespace aerotx::dataset {

namespace fs = std::filesystem;
using geometry::CstAirfoil;
using geometry::SpanwiseDistribution;
using geometry::SpanwiseKind;
using geometry::WingShape;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::size_t kMaxAirfoilTries = 100;
const std::vector<double> kSpline5Etas{0.0, 0.25, 0.5, 0.75, 1.0};
const std::vector<double> kSectionEtas{0.0, 0.1, 0.2, 0.368, 0.55, 0.75, 1.0};
constexpr std::array<double, 7> kSectionThickness{1.3, 1.2, 1.1, 1.0, 0.95, 0.9, 0.88};
constexpr std::array<double, 7> kSectionCamber{-0.4, 0.2, 0.6, 1.0, 1.0, 0.9, 0.8};
constexpr std::array<double, 7> kBaselineTwist{0.0, -0.5, -1.0, -1.5, -2.0, -2.5, -3.0};
constexpr double kBaselineDihedralDeg = 4.0;

double uniform(Rng& rng, const Range& r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); }

CstAirfoil scaled_airfoil(const CstAirfoil& base, double thickness, double camber) {
    CstAirfoil out;
    for (std::size_t i = 0; i < CstAirfoil::kCoefficients; ++i) {
        const double mean = 0.5 * (base.upper[i] + base.lower[i]);
        const double half = 0.5 * (base.upper[i] - base.lower[i]);
        out.upper[i] = camber * mean + thickness * half;
        out.lower[i] = camber * mean - thickness * half;
    }
    out.te_thickness = thickness * base.te_thickness;
    return out;
}

SpanwiseDistribution distribution(std::vector<double> etas, std::vector<double> values, SpanwiseKind kind) {
    SpanwiseDistribution d;
    d.control_etas = std::move(etas);
    d.control_values = std::move(values);
    d.kind = kind;
    return d;
}

CstAirfoil perturbed_airfoil(const CstAirfoil& base, double perturbation, Rng& rng) {
    const Range factor{1.0 - perturbation, 1.0 + perturbation};
    for (std::size_t attempt = 0; attempt < kMaxAirfoilTries; ++attempt) {
        CstAirfoil a = base;
        for (auto& v : a.upper) v *= uniform(rng, factor);
        for (auto& v : a.lower) v *= uniform(rng, factor);
        if (geometry::is_non_intersecting(a)) return a;
    }
    throw ConstructionError("no valid perturbed airfoil after " + std::to_string(kMaxAirfoilTries) + " draws");
}

// Little-endian byte packing.
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t u32(const char* section) {
        need(4, section);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    void f32(std::span<float> out, const char* section) {
        need(4 * out.size(), section);
        for (auto& f : out) f = std::bit_cast<float>(u32(section));
    }

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* section) const {
        if (bytes_.size() - pos_ < n)
            throw FormatError(std::string("truncated sample: missing ") + section, pos_);
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::string sample_file_name(std::size_t shape, std::size_t condition) {
    std::ostringstream s;
    s << "sample_" << std::setw(6) << std::setfill('0') << shape << "_" << condition << ".atds";
    return s.str();
}

std::vector<SampleRecord> generate_shape(const DesignSpace& space, std::uint64_t seed, std::size_t shape_id,
                                         WingShape& shape_out) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(shape_id), static_cast<std::uint32_t>(shape_id >> 32)};
    Rng rng(seq);
    const WingShape shape = sample_shape(space, rng);
    const auto conditions = sample_conditions(space, rng, 8);
    const auto mesh = geometry::build_surface_mesh(shape, space.resolution);
    const double c_mac = geometry::build_planform(shape.planform).mean_aerodynamic_chord();
    const auto forces = aero::force_weights(mesh, c_mac);

    std::vector<float> mesh_f(mesh.cell_centers.begin(), mesh.cell_centers.end());
    std::vector<SampleRecord> out;
    for (std::size_t k = 0; k < conditions.size(); ++k) {
        const aero::OperatingCondition oc{static_cast<float>(conditions[k].mach),
                                          static_cast<float>(conditions[k].aoa_deg)};
        SampleRecord r;
        r.height = static_cast<std::uint32_t>(mesh.height);
        r.width = static_cast<std::uint32_t>(mesh.width);
        r.mesh = mesh_f;
        const auto flow = aero::oracle_flow(mesh, shape, oc);
        r.flow.assign(flow.data.begin(), flow.data.end());
        r.oc = {static_cast<float>(oc.mach), static_cast<float>(oc.aoa_deg)};
        // Coefficients of the stored (f32) fields, so a reader re-integrating them agrees.
        const auto coef = aero::integrate_coefficients(forces, r.surface_flow(), oc.aoa_deg);
        r.coefficients = {static_cast<float>(coef.cl), static_cast<float>(coef.cd), static_cast<float>(coef.cmz)};
        r.shape_id = static_cast<std::uint32_t>(shape_id);
        r.condition_index = static_cast<std::uint32_t>(k);
        out.push_back(std::move(r));
    }
    shape_out = shape;
    return out;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

Dataset generate_records(const DesignSpace& space, std::size_t n_shapes, std::uint64_t seed, std::size_t workers) {
    if (n_shapes == 0) throw ConfigError("n_shapes must be at least 1");
    std::vector<std::vector<SampleRecord>> per_shape(n_shapes);
    std::vector<WingShape> shapes(n_shapes);
    parallel_for(n_shapes, workers, [&](std::size_t i) { per_shape[i] = generate_shape(space, seed, i, shapes[i]); });

    Dataset ds;
    for (auto& group : per_shape)
        for (auto& r : group) ds.records.push_back(std::move(r));
    auto& m = ds.manifest;
    m.kind = space.kind;
    m.count = ds.records.size();
    m.shapes = n_shapes;
    m.seed = seed;
    m.resolution = space.resolution;
    m.design_space = space;
    m.shape_list = std::move(shapes);
    std::vector<std::size_t> all(ds.records.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    m.stats = compute_standardization(ds.records, all);
    for (const auto& r : ds.records) m.files.push_back(sample_file_name(r.shape_id, r.condition_index));
    return ds;
}

void write_atomically(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out) throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::vector<double> flat(const CstAirfoil& a) {
    std::vector<double> v(a.upper.begin(), a.upper.end());
    v.insert(v.end(), a.lower.begin(), a.lower.end());
    return v;
}

}  // namespace

DesignSpace DesignSpace::pretrain_like() { return DesignSpace{}; }

DesignSpace DesignSpace::finetune_like() {
    DesignSpace s;
    s.kind = SpaceKind::finetune_like;
    const auto p = geometry::baseline_planform();
    s.sweep_le = {p.sweep_le, p.sweep_le};
    s.aspect_ratio = {p.aspect_ratio, p.aspect_ratio};
    s.taper_ratio = {p.taper_ratio, p.taper_ratio};
    s.kink_eta = {p.kink_eta, p.kink_eta};
    s.root_adjust = {p.root_adjust, p.root_adjust};
    s.twist_deg = {-3.0, 0.0};
    s.aoa_deg = {-2.0, 4.0};
    return s;
}

CstAirfoil baseline_airfoil() {
    static const CstAirfoil airfoil = nlohmann::json::parse(baseline_airfoil_json()).get<CstAirfoil>();
    return airfoil;
}

WingShape baseline_wing() {
    WingShape w;
    w.planform = geometry::baseline_planform();
    const geometry::Planform planform(w.planform);
    const CstAirfoil base = baseline_airfoil();
    std::vector<double> dihedral, twist;
    for (std::size_t k = 0; k < kSectionEtas.size(); ++k) {
        w.sections.push_back({kSectionEtas[k], scaled_airfoil(base, kSectionThickness[k], kSectionCamber[k])});
        dihedral.push_back(std::tan(kBaselineDihedralDeg * kPi / 180.0) * kSectionEtas[k] * planform.b_half());
        twist.push_back(kBaselineTwist[k]);
    }
    w.dihedral = distribution(kSectionEtas, std::move(dihedral), SpanwiseKind::linear7);
    w.twist = distribution(kSectionEtas, std::move(twist), SpanwiseKind::linear7);
    return w;
}

WingShape sample_shape(const DesignSpace& space, Rng& rng) {
    WingShape w;
    if (space.kind == SpaceKind::pretrain_like) {
        auto& p = w.planform;
        p.sweep_le = uniform(rng, space.sweep_le);
        p.aspect_ratio = uniform(rng, space.aspect_ratio);
        p.taper_ratio = uniform(rng, space.taper_ratio);
        p.kink_eta = uniform(rng, space.kink_eta);
        p.root_adjust = uniform(rng, space.root_adjust);
        p.validate();
        const double b_half = std::sqrt(p.aspect_ratio / 2.0);
        w.sections = {{0.0, baseline_airfoil()}};
        std::vector<double> thickness(5), camber(5), twist(5);
        for (auto& v : thickness) v = uniform(rng, space.thickness_scale);
        for (auto& v : camber) v = uniform(rng, space.camber_scale);
        const double inner = std::tan(uniform(rng, space.kink_dihedral_deg) * kPi / 180.0);
        const double outer = std::tan(uniform(rng, space.tip_dihedral_deg) * kPi / 180.0);
        for (auto& v : twist) v = uniform(rng, space.twist_deg);
        const double y_kink = inner * p.kink_eta * b_half;
        const double y_tip = y_kink + outer * (1.0 - p.kink_eta) * b_half;
        w.thickness = distribution(kSpline5Etas, std::move(thickness), SpanwiseKind::bspline5);
        w.camber = distribution(kSpline5Etas, std::move(camber), SpanwiseKind::bspline5);
        w.dihedral = distribution({0.0, p.kink_eta, 1.0}, {0.0, y_kink, y_tip}, SpanwiseKind::linear);
        w.twist = distribution(kSpline5Etas, std::move(twist), SpanwiseKind::bspline5);
    } else {
        w = baseline_wing();
        const double c_root = geometry::Planform(w.planform).root_chord();
        for (auto& sec : w.sections) sec.airfoil = perturbed_airfoil(sec.airfoil, space.cst_perturbation, rng);
        const Range offset{-space.dihedral_perturbation * c_root, space.dihedral_perturbation * c_root};
        for (std::size_t k = 1; k < w.dihedral.control_values.size(); ++k)
            w.dihedral.control_values[k] += uniform(rng, offset);
        for (auto& v : w.twist.control_values) v = uniform(rng, space.twist_deg);
    }
    w.validate();
    return w;
}

std::vector<double> shape_parameters(const WingShape& shape, SpaceKind kind) {
    std::vector<double> v;
    if (kind == SpaceKind::pretrain_like) {
        v = flat(shape.sections.at(0).airfoil);
        for (const auto* d : {&shape.thickness, &shape.camber})
            v.insert(v.end(), d->control_values.begin(), d->control_values.end());
        v.insert(v.end(), shape.dihedral.control_values.begin() + 1, shape.dihedral.control_values.end());
        v.insert(v.end(), shape.twist.control_values.begin(), shape.twist.control_values.end());
    } else {
        for (const auto& sec : shape.sections) {
            const auto a = flat(sec.airfoil);
            v.insert(v.end(), a.begin(), a.end());
        }
        v.insert(v.end(), shape.dihedral.control_values.begin() + 1, shape.dihedral.control_values.end());
        v.insert(v.end(), shape.twist.control_values.begin(), shape.twist.control_values.end());
    }
    return v;
}

std::vector<aero::OperatingCondition> sample_conditions(const DesignSpace& space, Rng& rng, std::size_t n) {
    if (n == 0) throw ConfigError("sample_conditions: n must be at least 1");
    std::vector<aero::OperatingCondition> out(n);
    for (auto& oc : out) {
        oc.mach = uniform(rng, space.mach);
        oc.aoa_deg = uniform(rng, space.aoa_deg);
    }
    return out;
}

aero::SurfaceFlow SampleRecord::surface_flow() const {
    aero::SurfaceFlow f(height, width);
    std::copy(flow.begin(), flow.end(), f.data.begin());
    return f;
}

std::vector<std::uint8_t> encode_sample(const SampleRecord& r) {
    const std::size_t n = 3ull * r.height * r.width;
    if (r.mesh.size() != n || r.flow.size() != n) throw ConfigError("sample arrays do not match H x W");
    std::vector<std::uint8_t> out;
    out.reserve(16 + 8 * n + 28);
    for (char c : {'A', 'T', 'D', 'S'}) out.push_back(static_cast<std::uint8_t>(c));
    put_u32(out, kSampleVersion);
    put_u32(out, r.height);
    put_u32(out, r.width);
    for (float f : r.mesh) put_f32(out, f);
    for (float f : r.flow) put_f32(out, f);
    for (float f : r.oc) put_f32(out, f);
    for (float f : r.coefficients) put_f32(out, f);
    put_u32(out, r.shape_id);
    put_u32(out, r.condition_index);
    return out;
}

SampleRecord decode_sample(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw FormatError("truncated sample: missing magic", 0);
    if (std::memcmp(bytes.data(), "ATDS", 4) != 0) throw FormatError("bad magic, expected ATDS", 0);
    Reader in(bytes.subspan(4));
    auto at = [&] { return 4 + in.position(); };
    SampleRecord r;
    const std::size_t version_offset = at();
    const std::uint32_t version = in.u32("version");
    if (version != kSampleVersion)
        throw FormatError("unsupported sample version " + std::to_string(version), version_offset);
    const std::size_t shape_offset = at();
    r.height = in.u32("height");
    r.width = in.u32("width");
    const std::uint64_t n = 3ull * r.height * r.width;
    if (r.height == 0 || r.width == 0 || n * 8 > in.remaining())
        throw FormatError("bad or truncated shape " + std::to_string(r.height) + "x" + std::to_string(r.width),
                          shape_offset);
    r.mesh.resize(n);
    r.flow.resize(n);
    in.f32(r.mesh, "mesh");
    in.f32(r.flow, "flow");
    in.f32(r.oc, "operating condition");
    in.f32(r.coefficients, "coefficients");
    r.shape_id = in.u32("shape_id");
    r.condition_index = in.u32("condition_index");
    if (in.remaining() != 0) throw FormatError("trailing bytes after sample", at());
    return r;
}

void write_sample(const fs::path& path, const SampleRecord& record) {
    const auto bytes = encode_sample(record);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

SampleRecord read_sample(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_sample(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.filename().string() + ": " + e.what());
    }
}

Dataset generate_in_memory(const DesignSpace& space, std::size_t n_shapes, std::uint64_t seed, std::size_t workers) {
    return generate_records(space, n_shapes, seed, workers);
}

DatasetManifest generate_dataset(const DesignSpace& space, std::size_t n_shapes, const fs::path& out_dir,
                                 std::uint64_t seed, std::size_t workers) {
    Dataset ds = generate_records(space, n_shapes, seed, workers);
    fs::create_directories(out_dir);
    std::size_t written = 0;
    try {
        for (std::size_t i = 0; i < ds.records.size(); ++i) {
            write_sample(out_dir / ds.manifest.files[i], ds.records[i]);
            ++written;
        }
    } catch (const std::exception& e) {
        throw Error(std::string(e.what()) + " (" + std::to_string(written) + " of " +
                    std::to_string(ds.records.size()) + " samples written)");
    }
    write_atomically(out_dir / "manifest.json", nlohmann::json(ds.manifest).dump(1));
    return ds.manifest;
}

DatasetManifest read_manifest(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw Error("no manifest.json in " + dir.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest.json: ") + e.what());
    }
    return j.get<DatasetManifest>();
}

Dataset load_dataset(const fs::path& dir) {
    Dataset ds;
    ds.manifest = read_manifest(dir);
    if (ds.manifest.files.size() != ds.manifest.count)
        throw FormatError("manifest count " + std::to_string(ds.manifest.count) + " does not match its file list (" +
                          std::to_string(ds.manifest.files.size()) + ")");
    for (const auto& f : ds.manifest.files) {
        if (!fs::exists(dir / f)) throw FormatError("missing sample file " + f);
        ds.records.push_back(read_sample(dir / f));
        if (ds.records.back().shape_id >= ds.manifest.shape_list.size())
            throw FormatError(f + ": shape_id outside the manifest shape list");
    }
    return ds;
}

geometry::SurfaceMesh record_mesh(const DatasetManifest& manifest, const SampleRecord& record) {
    return geometry::build_surface_mesh(manifest.shape_list.at(record.shape_id), manifest.resolution);
}

model::Standardization compute_standardization(std::span<const SampleRecord> records,
                                               std::span<const std::size_t> indices) {
    if (indices.empty()) throw ConfigError("compute_standardization: no records selected");
    std::array<double, 3> ms{}, mss{}, fs_{}, fss{}, cs{}, css{};
    double cells = 0.0;
    for (std::size_t idx : indices) {
        const auto& r = records[idx];
        const std::size_t plane = static_cast<std::size_t>(r.height) * r.width;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            for (std::size_t i = 0; i < plane; ++i) {
                const double m = r.mesh[ch * plane + i];
                const double f = r.flow[ch * plane + i];
                ms[ch] += m;
                mss[ch] += m * m;
                fs_[ch] += f;
                fss[ch] += f * f;
            }
            cs[ch] += r.coefficients[ch];
            css[ch] += static_cast<double>(r.coefficients[ch]) * r.coefficients[ch];
        }
        cells += static_cast<double>(plane);
    }
    const double n = static_cast<double>(indices.size());
    auto finish = [](double sum, double sq, double count, double& mean, double& stdev) {
        mean = sum / count;
        const double var = std::max(sq / count - mean * mean, 0.0);
        stdev = var > 1e-24 ? std::sqrt(var) : 1.0;
    };
    model::Standardization s;
    for (std::size_t ch = 0; ch < 3; ++ch) {
        finish(ms[ch], mss[ch], cells, s.mesh_mean[ch], s.mesh_std[ch]);
        finish(fs_[ch], fss[ch], cells, s.flow_mean[ch], s.flow_std[ch]);
        finish(cs[ch], css[ch], n, s.coef_mean[ch], s.coef_std[ch]);
    }
    return s;
}

std::vector<std::size_t> split_folds(std::span<const SampleRecord> records, std::size_t k, std::uint64_t seed,
                                     Granularity granularity) {
    if (k < 2) throw ConfigError("split_folds: k must be at least 2");
    std::vector<std::uint32_t> units;
    if (granularity == Granularity::by_shape) {
        for (const auto& r : records) units.push_back(r.shape_id);
        std::sort(units.begin(), units.end());
        units.erase(std::unique(units.begin(), units.end()), units.end());
    } else {
        units.resize(records.size());
        std::iota(units.begin(), units.end(), 0u);
    }
    if (k > units.size())
        throw ConfigError("split_folds: " + std::to_string(k) + " folds for " + std::to_string(units.size()) +
                          " units");
    Rng rng(seed);
    std::shuffle(units.begin(), units.end(), rng);
    std::vector<std::size_t> fold(records.size());
    if (granularity == Granularity::by_shape) {
        std::map<std::uint32_t, std::size_t> of_shape;
        for (std::size_t i = 0; i < units.size(); ++i) of_shape[units[i]] = i % k;
        for (std::size_t i = 0; i < records.size(); ++i) fold[i] = of_shape.at(records[i].shape_id);
    } else {
        for (std::size_t i = 0; i < units.size(); ++i) fold[units[i]] = i % k;
    }
    return fold;
}

std::vector<std::size_t> select_samples(std::span<const SampleRecord> records, std::span<const std::size_t> candidates,
                                        std::size_t count, Selection selection, std::uint64_t seed) {
    std::map<std::uint32_t, std::vector<std::size_t>> by_shape;
    for (std::size_t idx : candidates) by_shape[records[idx].shape_id].push_back(idx);
    std::vector<std::uint32_t> shapes;
    for (const auto& [id, _] : by_shape) shapes.push_back(id);
    Rng rng(seed);
    std::shuffle(shapes.begin(), shapes.end(), rng);
    std::vector<std::size_t> out;
    for (std::uint32_t id : shapes) {
        if (out.size() >= count) break;
        auto& group = by_shape[id];
        if (selection == Selection::one_per_shape) {
            out.push_back(group[std::uniform_int_distribution<std::size_t>(0, group.size() - 1)(rng)]);
        } else {
            for (std::size_t idx : group) {
                if (out.size() >= count) break;
                out.push_back(idx);
            }
        }
    }
    if (out.size() < count)
        throw ConfigError("select_samples: only " + std::to_string(out.size()) + " samples available, " +
                          std::to_string(count) + " requested");
    return out;
}

Eigen::MatrixXd PcaResult::reconstruct(std::size_t m) const {
    m = std::min<std::size_t>(m, static_cast<std::size_t>(components.rows()));
    if (m == 0) return Eigen::MatrixXd::Zero(standardized.rows(), standardized.cols());
    const Eigen::MatrixXd basis = components.topRows(static_cast<Eigen::Index>(m));
    return (standardized * basis.transpose()) * basis;
}

PcaResult pca_modes(const std::vector<std::vector<double>>& samples, std::vector<double> thresholds) {
    if (samples.size() < 2) throw ConfigError("pca_modes needs at least 2 samples");
    PcaResult r;
    r.samples = samples.size();
    r.dims = samples.front().size();
    r.thresholds = std::move(thresholds);
    const auto n = static_cast<Eigen::Index>(r.samples);
    const auto d = static_cast<Eigen::Index>(r.dims);
    r.standardized = Eigen::MatrixXd::Zero(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (samples[static_cast<std::size_t>(i)].size() != r.dims) throw ConfigError("pca_modes: ragged samples");
        r.standardized.row(i) = Eigen::Map<const Eigen::RowVectorXd>(samples[static_cast<std::size_t>(i)].data(), d);
    }
    const Eigen::RowVectorXd mean = r.standardized.colwise().mean();
    r.standardized.rowwise() -= mean;
    const Eigen::RowVectorXd var = r.standardized.colwise().squaredNorm() / static_cast<double>(n - 1);
    for (Eigen::Index j = 0; j < d; ++j) {
        // Constant coordinates carry no variance and stay at zero after centring.
        if (var(j) > 1e-24) r.standardized.col(j) /= std::sqrt(var(j));
        else r.standardized.col(j).setZero();
    }

    // Covariance spectrum through the n x n Gram matrix, which is cheaper when n << d.
    const Eigen::MatrixXd gram = r.standardized * r.standardized.transpose() / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    const Eigen::VectorXd ev = solver.eigenvalues().reverse();
    const Eigen::MatrixXd vecs = solver.eigenvectors().rowwise().reverse();
    const double total = ev.cwiseMax(0.0).sum();
    r.degenerate = !(total > 1e-12);
    r.modes.assign(r.thresholds.size(), 0);
    if (r.degenerate) return r;

    double acc = 0.0;
    const double cutoff = 1e-12 * ev(0);
    std::vector<Eigen::RowVectorXd> comps;
    for (Eigen::Index m = 0; m < ev.size(); ++m) {
        const double lambda = std::max(ev(m), 0.0);
        r.eigenvalues.push_back(lambda);
        acc += lambda;
        r.cumulative.push_back(std::min(acc / total, 1.0));
        if (lambda > cutoff) {
            Eigen::RowVectorXd v = vecs.col(m).transpose() * r.standardized;
            comps.push_back(v / v.norm());
        }
    }
    r.components.resize(static_cast<Eigen::Index>(comps.size()), d);
    for (std::size_t m = 0; m < comps.size(); ++m) r.components.row(static_cast<Eigen::Index>(m)) = comps[m];
    for (std::size_t t = 0; t < r.thresholds.size(); ++t) {
        std::size_t m = 0;
        while (m < r.cumulative.size() && r.cumulative[m] < r.thresholds[t] - 1e-12) ++m;
        r.modes[t] = std::min(m + 1, r.cumulative.size());
    }
    return r;
}

PcaResult pca_modes(const Dataset& dataset, std::vector<double> thresholds) {
    std::map<std::uint32_t, const SampleRecord*> first;
    for (const auto& r : dataset.records) first.emplace(r.shape_id, &r);
    std::vector<std::vector<double>> rows;
    for (const auto& [id, rec] : first) rows.emplace_back(rec->mesh.begin(), rec->mesh.end());
    return pca_modes(rows, std::move(thresholds));
}

std::string to_string(SpaceKind kind) { return kind == SpaceKind::pretrain_like ? "pretrain" : "finetune"; }

SpaceKind space_kind_from_string(const std::string& s) {
    if (s == "pretrain" || s == "pretrain_like") return SpaceKind::pretrain_like;
    if (s == "finetune" || s == "finetune_like") return SpaceKind::finetune_like;
    throw ConfigError("kind must be pretrain or finetune, got " + s);
}

namespace {

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

Range range_from(const nlohmann::json& j, const char* key, Range fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw ConfigError(std::string(key) + " must be [lo, hi]");
    return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

void to_json(nlohmann::json& j, const DesignSpace& s) {
    j = {{"kind", to_string(s.kind)},
         {"sweep_le", range_json(s.sweep_le)},
         {"aspect_ratio", range_json(s.aspect_ratio)},
         {"taper_ratio", range_json(s.taper_ratio)},
         {"kink_eta", range_json(s.kink_eta)},
         {"root_adjust", range_json(s.root_adjust)},
         {"thickness_scale", range_json(s.thickness_scale)},
         {"camber_scale", range_json(s.camber_scale)},
         {"kink_dihedral_deg", range_json(s.kink_dihedral_deg)},
         {"tip_dihedral_deg", range_json(s.tip_dihedral_deg)},
         {"twist_deg", range_json(s.twist_deg)},
         {"cst_perturbation", s.cst_perturbation},
         {"dihedral_perturbation", s.dihedral_perturbation},
         {"mach", range_json(s.mach)},
         {"aoa_deg", range_json(s.aoa_deg)},
         {"resolution", {s.resolution.chord_cells, s.resolution.span_cells}}};
}

void from_json(const nlohmann::json& j, DesignSpace& s) {
    const SpaceKind kind = space_kind_from_string(j.at("kind").get<std::string>());
    const DesignSpace d = kind == SpaceKind::pretrain_like ? DesignSpace::pretrain_like() : DesignSpace::finetune_like();
    s = d;
    s.sweep_le = range_from(j, "sweep_le", d.sweep_le);
    s.aspect_ratio = range_from(j, "aspect_ratio", d.aspect_ratio);
    s.taper_ratio = range_from(j, "taper_ratio", d.taper_ratio);
    s.kink_eta = range_from(j, "kink_eta", d.kink_eta);
    s.root_adjust = range_from(j, "root_adjust", d.root_adjust);
    s.thickness_scale = range_from(j, "thickness_scale", d.thickness_scale);
    s.camber_scale = range_from(j, "camber_scale", d.camber_scale);
    s.kink_dihedral_deg = range_from(j, "kink_dihedral_deg", d.kink_dihedral_deg);
    s.tip_dihedral_deg = range_from(j, "tip_dihedral_deg", d.tip_dihedral_deg);
    s.twist_deg = range_from(j, "twist_deg", d.twist_deg);
    s.cst_perturbation = j.value("cst_perturbation", d.cst_perturbation);
    s.dihedral_perturbation = j.value("dihedral_perturbation", d.dihedral_perturbation);
    s.mach = range_from(j, "mach", d.mach);
    s.aoa_deg = range_from(j, "aoa_deg", d.aoa_deg);
    if (j.contains("resolution")) {
        s.resolution.chord_cells = j.at("resolution").at(0).get<std::size_t>();
        s.resolution.span_cells = j.at("resolution").at(1).get<std::size_t>();
    }
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
    j = {{"version", m.version},
         {"kind", to_string(m.kind)},
         {"count", m.count},
         {"shapes", m.shapes},
         {"conditions_per_shape", m.conditions_per_shape},
         {"seed", m.seed},
         {"resolution", {m.resolution.chord_cells, m.resolution.span_cells}},
         {"stats", m.stats},
         {"design_space", m.design_space},
         {"shape_list", m.shape_list},
         {"files", m.files}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
    try {
        m.version = j.at("version").get<std::uint32_t>();
        if (m.version != kManifestVersion)
            throw FormatError("unsupported manifest version " + std::to_string(m.version));
        m.kind = space_kind_from_string(j.at("kind").get<std::string>());
        m.count = j.at("count").get<std::size_t>();
        m.shapes = j.at("shapes").get<std::size_t>();
        m.conditions_per_shape = j.at("conditions_per_shape").get<std::size_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.resolution.chord_cells = j.at("resolution").at(0).get<std::size_t>();
        m.resolution.span_cells = j.at("resolution").at(1).get<std::size_t>();
        m.stats = j.at("stats").get<model::Standardization>();
        m.design_space = j.at("design_space");
        m.shape_list = j.at("shape_list").get<std::vector<WingShape>>();
        m.files = j.at("files").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
}

}  // namespace aerotx::dataset
