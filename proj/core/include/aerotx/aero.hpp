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
#include <span>
#include <vector>

#include "aerotx/geometry.hpp"

namespace aerotx::aero {

inline constexpr double kReynolds = 2e7;
inline constexpr double kReferenceArea = 1.0;

struct OperatingCondition {
    double mach = 0.8;
    double aoa_deg = 2.0;

    void validate() const;
};

enum class Channel : std::size_t { cp = 0, cf_tau = 1, cf_z = 2 };
inline constexpr std::size_t kChannels = 3;

/// Per-cell surface fields, channel-first [3, H, W].
struct SurfaceFlow {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> data;

    SurfaceFlow() = default;
    SurfaceFlow(std::size_t h, std::size_t w) : height(h), width(w), data(kChannels * h * w, 0.0) {}

    std::size_t cells() const noexcept { return height * width; }
    std::span<double> channel(Channel c) { return {data.data() + static_cast<std::size_t>(c) * cells(), cells()}; }
    std::span<const double> channel(Channel c) const {
        return {data.data() + static_cast<std::size_t>(c) * cells(), cells()};
    }
    std::span<const double> channel(std::size_t c) const { return {data.data() + c * cells(), cells()}; }
};

struct AeroCoefficients {
    double cl = 0.0;
    double cd = 0.0;
    double cmz = 0.0;
};

struct FlowMetrics {
    double d_cp = 0.0;      ///< percent
    double d_cf_tau = 0.0;  ///< percent
    double d_cf_z = 0.0;    ///< percent
    double sfe = 0.0;       ///< percent, mean of the three channels
    std::size_t degenerate_samples = 0;
};

struct CoefficientMetrics {
    double d_cl = 0.0;
    double d_cd = 0.0;
    double d_cmz = 0.0;
};

/// Spanwise quantities the oracle needs at one section.
struct SectionState {
    double chord = 0.0;
    double thickness = 0.0;  ///< maximum t/c
    double camber = 0.0;     ///< signed mean-line extremum, y/c
    double twist_deg = 0.0;
};

SectionState section_state(const geometry::WingShape& shape, const geometry::Planform& planform, double eta);

/// Deterministic closed-form pseudo-flow standing in for a RANS solution.
SurfaceFlow oracle_flow(const geometry::SurfaceMesh& mesh, const geometry::WingShape& shape,
                        const OperatingCondition& oc);

/// Single-cell oracle evaluation, exposed for golden-value tests.
struct OracleCell {
    double cp = 0.0;
    double cf_tau = 0.0;
    double cf_z = 0.0;
};
OracleCell oracle_cell(geometry::CellKind kind, double xbar, const SectionState& section, double sweep_le_deg,
                       const OperatingCondition& oc);

/// Body-axis force and moment weights of every (channel, cell): the integration is linear
/// in the surface fields, so C_Fx = Σ_c Σ_i fx[c][i] · flow[c][i] and likewise for C_Fy, C_Mz.
struct ForceWeights {
    std::size_t cells = 0;
    std::vector<double> fx;  // [3, cells]
    std::vector<double> fy;  // [3, cells]
    std::vector<double> mz;  // [3, cells]
    double mean_aerodynamic_chord = 1.0;
};

ForceWeights force_weights(const geometry::SurfaceMesh& mesh, double mean_aerodynamic_chord);

/// Wind-axis weights: rows (C_L, C_D, C_Mz), each [3, cells].
struct CoefficientWeights {
    std::size_t cells = 0;
    std::array<std::vector<double>, 3> rows;
};

CoefficientWeights coefficient_weights(const ForceWeights& forces, double aoa_deg);

AeroCoefficients integrate_coefficients(const geometry::SurfaceMesh& mesh, double mean_aerodynamic_chord,
                                        const SurfaceFlow& flow, const OperatingCondition& oc);
AeroCoefficients integrate_coefficients(const ForceWeights& weights, const SurfaceFlow& flow, double aoa_deg);

/// Convenience overload deriving c_mac from the wing planform.
AeroCoefficients integrate_coefficients(const geometry::SurfaceMesh& mesh, const geometry::WingShape& shape,
                                        const SurfaceFlow& flow, const OperatingCondition& oc);

/// Exact per-cell derivatives of C_L and C_D with respect to Cp.
struct IntegrationSensitivity {
    std::vector<double> dcl_dcp;
    std::vector<double> dcd_dcp;
};
IntegrationSensitivity integration_sensitivity(const geometry::SurfaceMesh& mesh, const OperatingCondition& oc);

/// Range-normalized MAE per channel, averaged over samples; throws on size mismatch.
FlowMetrics field_error(std::span<const SurfaceFlow> pred, std::span<const SurfaceFlow> truth);
FlowMetrics field_error(const SurfaceFlow& pred, const SurfaceFlow& truth);

CoefficientMetrics coefficient_error(std::span<const AeroCoefficients> pred, std::span<const AeroCoefficients> truth);

}  // namespace aerotx::aero
