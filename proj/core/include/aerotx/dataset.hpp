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
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "aerotx/aero.hpp"
#include "aerotx/geometry.hpp"
#include "aerotx/model.hpp"

namespace aerotx::dataset {

using Rng = std::mt19937_64;

enum class SpaceKind { pretrain_like, finetune_like };

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const noexcept { return v >= lo && v <= hi; }
};

/// Sampling boxes for one family of wings and their operating conditions.
struct DesignSpace {
    SpaceKind kind = SpaceKind::pretrain_like;
    // Planform (pretrain_like only; finetune_like uses baseline_planform()).
    Range sweep_le{25.0, 40.0};
    Range aspect_ratio{8.0, 11.0};
    Range taper_ratio{0.15, 0.40};
    Range kink_eta{0.36, 0.42};
    Range root_adjust{0.10, 1.10};
    // pretrain_like spanwise scalers and angles.
    Range thickness_scale{0.7, 1.3};
    Range camber_scale{0.5, 1.5};
    Range kink_dihedral_deg{0.0, 3.0};  ///< inner-panel dihedral angle
    Range tip_dihedral_deg{0.0, 6.0};   ///< outer-panel dihedral angle
    Range twist_deg{-4.0, 2.0};
    // finetune_like perturbations.
    double cst_perturbation = 0.4;     ///< relative, each coefficient scaled by U[1-p, 1+p]
    double dihedral_perturbation = 0.05;  ///< fraction of the root chord
    // Conditions.
    Range mach{0.75, 0.90};
    Range aoa_deg{2.0, 12.0};
    geometry::MeshResolution resolution{};

    static DesignSpace pretrain_like();
    static DesignSpace finetune_like();
};

/// Supercritical-like CST set shared by all pretrain_like wings.
geometry::CstAirfoil baseline_airfoil();
const char* baseline_airfoil_json() noexcept;

/// Seven-section baseline used as the centre of the finetune_like family.
geometry::WingShape baseline_wing();

geometry::WingShape sample_shape(const DesignSpace& space, Rng& rng);

/// Shape parameters beyond the planform, flattened in a fixed order. Its length is the
/// number of degrees of freedom of the family.
std::vector<double> shape_parameters(const geometry::WingShape& shape, SpaceKind kind);

std::vector<aero::OperatingCondition> sample_conditions(const DesignSpace& space, Rng& rng, std::size_t n = 8);

struct SampleRecord {
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::vector<float> mesh;  // [3, H, W] cell centres
    std::vector<float> flow;  // [3, H, W]
    std::array<float, 2> oc{};  // mach, aoa_deg
    std::array<float, 3> coefficients{};  // cl, cd, cmz
    std::uint32_t shape_id = 0;
    std::uint32_t condition_index = 0;

    aero::OperatingCondition condition() const { return {oc[0], oc[1]}; }
    aero::SurfaceFlow surface_flow() const;
    aero::AeroCoefficients coefficient_triple() const { return {coefficients[0], coefficients[1], coefficients[2]}; }
};

inline constexpr std::uint32_t kSampleVersion = 1;
inline constexpr std::uint32_t kManifestVersion = 1;

std::vector<std::uint8_t> encode_sample(const SampleRecord& record);
SampleRecord decode_sample(std::span<const std::uint8_t> bytes);
void write_sample(const std::filesystem::path& path, const SampleRecord& record);
SampleRecord read_sample(const std::filesystem::path& path);

struct DatasetManifest {
    std::uint32_t version = kManifestVersion;
    SpaceKind kind = SpaceKind::pretrain_like;
    std::size_t count = 0;
    std::size_t shapes = 0;
    std::size_t conditions_per_shape = 8;
    std::uint64_t seed = 0;
    geometry::MeshResolution resolution{};
    model::Standardization stats;
    nlohmann::json design_space;
    std::vector<geometry::WingShape> shape_list;  ///< indexed by shape_id
    std::vector<std::string> files;               ///< relative to the dataset directory
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<SampleRecord> records;
};

/// Writes `n_shapes * 8` sample files and an atomically replaced manifest.json into `out_dir`.
/// Output is independent of `workers`.
DatasetManifest generate_dataset(const DesignSpace& space, std::size_t n_shapes, const std::filesystem::path& out_dir,
                                 std::uint64_t seed, std::size_t workers = 1);

/// In-memory variant, no I/O.
Dataset generate_in_memory(const DesignSpace& space, std::size_t n_shapes, std::uint64_t seed,
                           std::size_t workers = 1);

Dataset load_dataset(const std::filesystem::path& dir);
DatasetManifest read_manifest(const std::filesystem::path& dir);

/// Mesh of a record's shape at the dataset resolution.
geometry::SurfaceMesh record_mesh(const DatasetManifest& manifest, const SampleRecord& record);

/// Per-channel mean and standard deviation over the selected records.
model::Standardization compute_standardization(std::span<const SampleRecord> records,
                                               std::span<const std::size_t> indices);

enum class Granularity { by_shape, by_sample };

/// Fold index per record; a seeded shuffle of the units (shapes or samples) dealt round-robin.
std::vector<std::size_t> split_folds(std::span<const SampleRecord> records, std::size_t k, std::uint64_t seed,
                                     Granularity granularity);

enum class Selection { all_per_shape, one_per_shape };

/// Picks `count` record indices from `candidates`: whole shapes, or one random condition per shape.
std::vector<std::size_t> select_samples(std::span<const SampleRecord> records, std::span<const std::size_t> candidates,
                                        std::size_t count, Selection selection, std::uint64_t seed);

struct PcaResult {
    std::size_t samples = 0;
    std::size_t dims = 0;
    bool degenerate = false;
    std::vector<double> eigenvalues;  ///< descending
    std::vector<double> cumulative;   ///< explained-variance fraction after m + 1 modes
    std::vector<double> thresholds;
    std::vector<std::size_t> modes;   ///< per threshold
    Eigen::MatrixXd standardized;     ///< [samples, dims]
    Eigen::MatrixXd components;       ///< [modes, dims], unit rows

    /// Standardized data rebuilt from the first `m` modes.
    Eigen::MatrixXd reconstruct(std::size_t m) const;
};

PcaResult pca_modes(const std::vector<std::vector<double>>& samples, std::vector<double> thresholds = {0.99, 0.999});

/// PCA over the mesh coordinates of each distinct shape of a dataset.
PcaResult pca_modes(const Dataset& dataset, std::vector<double> thresholds = {0.99, 0.999});

void to_json(nlohmann::json& j, const DesignSpace& s);
void from_json(const nlohmann::json& j, DesignSpace& s);
void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);
std::string to_string(SpaceKind kind);
SpaceKind space_kind_from_string(const std::string& s);

}  // namespace aerotx::dataset
