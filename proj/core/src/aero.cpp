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

#include "aerotx/aero.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "aerotx/error.hpp"

namespace aerotx::aero {

namespace {

using geometry::CellKind;
using Vec3 = std::array<double, 3>;

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kProfileGrid = 201;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 reject(const Vec3& v, const Vec3& n) {
    const double d = dot(v, n);
    return {v[0] - d * n[0], v[1] - d * n[1], v[2] - d * n[2]};
}

double length(const Vec3& v) { return std::sqrt(dot(v, v)); }

Vec3 normalized(const Vec3& v) {
    const double l = length(v);
    return {v[0] / l, v[1] / l, v[2] / l};
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Streamwise and spanwise unit tangents of a cell: the body x and z axes projected onto
// the tangent plane. The chordwise mesh edge replaces x where x is (nearly) normal.
std::pair<Vec3, Vec3> cell_tangents(const geometry::SurfaceMesh& mesh, std::size_t i, std::size_t j,
                                    const Vec3& n) {
    Vec3 ts = reject({1.0, 0.0, 0.0}, n);
    if (length(ts) < 1e-6) {
        const std::size_t i1 = (i + 1) % mesh.height;
        const auto a = mesh.node(i, j);
        const auto b = mesh.node(i1, j);
        Vec3 edge{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
        // Loop order runs upstream on the lower surface.
        if (geometry::cell_kind(i, mesh.height) == CellKind::lower) edge = {-edge[0], -edge[1], -edge[2]};
        ts = reject(edge, n);
    }
    ts = normalized(ts);
    Vec3 tz = reject(reject({0.0, 0.0, 1.0}, n), ts);
    tz = normalized(tz);
    return {ts, tz};
}

}  // namespace

void OperatingCondition::validate() const {
    if (!(mach > 0.0 && mach < 1.0)) throw ConfigError("mach must lie in (0, 1), got " + std::to_string(mach));
    if (!(aoa_deg >= -10.0 && aoa_deg <= 15.0))
        throw ConfigError("aoa_deg must lie in [-10, 15], got " + std::to_string(aoa_deg));
}

SectionState section_state(const geometry::WingShape& shape, const geometry::Planform& planform, double eta) {
    const auto airfoil = shape.section_at(eta);
    SectionState s;
    s.chord = planform.chord(eta);
    s.twist_deg = geometry::spanwise_evaluate(shape.twist, eta);
    double camber = 0.0;
    for (std::size_t k = 0; k < kProfileGrid; ++k) {
        const double x = 0.5 * (1.0 - std::cos(kPi * static_cast<double>(k) / (kProfileGrid - 1)));
        const double yu = geometry::cst_evaluate(airfoil, x, geometry::Surface::upper);
        const double yl = geometry::cst_evaluate(airfoil, x, geometry::Surface::lower);
        s.thickness = std::max(s.thickness, yu - yl);
        const double mean = 0.5 * (yu + yl);
        if (std::abs(mean) > std::abs(camber)) camber = mean;
    }
    s.camber = camber;
    return s;
}

OracleCell oracle_cell(CellKind kind, double xbar, const SectionState& section, double sweep_le_deg,
                       const OperatingCondition& oc) {
    const double sweep = sweep_le_deg * kPi / 180.0;
    const double mc = oc.mach * std::cos(sweep);
    const double beta = std::sqrt(std::max(1.0 - mc * mc, 0.04));
    const double alpha_e = (oc.aoa_deg + section.twist_deg) * kPi / 180.0;
    const double loading = 2.0 * alpha_e + 8.0 * section.camber;
    const double le = std::sqrt((1.0 - xbar) / (xbar + 0.01));
    const double thick = 4.0 * section.thickness * std::sin(kPi * xbar) / beta;
    const double shock_amp = 0.8 * std::max(oc.mach - 0.72, 0.0) / beta;
    const double x_shock = std::clamp(0.15 + 2.5 * (oc.mach - 0.72) - 0.5 * alpha_e, 0.05, 0.85);

    OracleCell out;
    switch (kind) {
        case CellKind::upper:
            out.cp = -loading * le / beta - thick + shock_amp * sigmoid((xbar - x_shock) / 0.03);
            break;
        case CellKind::lower:
            out.cp = 0.3 * loading * le / beta - thick;
            break;
        case CellKind::trailing_edge:
            out.cp = 0.2;
            break;
    }
    double cf = 0.0576 * std::pow(kReynolds * section.chord * (xbar + 0.02), -0.2);
    if (kind == CellKind::upper && shock_amp > 0.0 && xbar > x_shock) cf *= 0.5;
    out.cf_tau = cf;
    out.cf_z = 0.2 * cf * std::tan(sweep) * (1.0 - xbar);
    return out;
}

SurfaceFlow oracle_flow(const geometry::SurfaceMesh& mesh, const geometry::WingShape& shape,
                        const OperatingCondition& oc) {
    oc.validate();
    const geometry::Planform planform(shape.planform);
    const std::size_t h = mesh.height;
    const std::size_t w = mesh.width;
    SurfaceFlow flow(h, w);
    auto cp = flow.channel(Channel::cp);
    auto ct = flow.channel(Channel::cf_tau);
    auto cz = flow.channel(Channel::cf_z);
    for (std::size_t j = 0; j < w; ++j) {
        const SectionState section = section_state(shape, planform, geometry::cell_span_fraction(j, w));
        for (std::size_t i = 0; i < h; ++i) {
            const auto cell = oracle_cell(geometry::cell_kind(i, h), geometry::cell_chord_fraction(i, h), section,
                                          shape.planform.sweep_le, oc);
            const std::size_t c = mesh.cell(i, j);
            cp[c] = cell.cp;
            ct[c] = cell.cf_tau;
            cz[c] = cell.cf_z;
        }
    }
    return flow;
}

ForceWeights force_weights(const geometry::SurfaceMesh& mesh, double mean_aerodynamic_chord) {
    const std::size_t n = mesh.cells();
    ForceWeights fw;
    fw.cells = n;
    fw.mean_aerodynamic_chord = mean_aerodynamic_chord;
    fw.fx.assign(3 * n, 0.0);
    fw.fy.assign(3 * n, 0.0);
    fw.mz.assign(3 * n, 0.0);
    const double moment_ref = kReferenceArea * mean_aerodynamic_chord;
    for (std::size_t i = 0; i < mesh.height; ++i) {
        for (std::size_t j = 0; j < mesh.width; ++j) {
            const std::size_t c = mesh.cell(i, j);
            const double area = mesh.areas[c];
            if (area == 0.0) continue;
            const Vec3 nrm = mesh.normal(i, j);
            const auto [ts, tz] = cell_tangents(mesh, i, j, nrm);
            // Pressure acts along -n; friction keeps only its tangential part.
            const std::array<Vec3, 3> per_channel = {
                Vec3{-nrm[0] * area, -nrm[1] * area, -nrm[2] * area},
                [&] { auto t = reject(ts, nrm); return Vec3{t[0] * area, t[1] * area, t[2] * area}; }(),
                [&] { auto t = reject(tz, nrm); return Vec3{t[0] * area, t[1] * area, t[2] * area}; }(),
            };
            const Vec3 r = mesh.center(i, j);
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const Vec3& f = per_channel[ch];
                fw.fx[ch * n + c] = f[0] / kReferenceArea;
                fw.fy[ch * n + c] = f[1] / kReferenceArea;
                fw.mz[ch * n + c] = (r[0] * f[1] - r[1] * f[0]) / moment_ref;
            }
        }
    }
    return fw;
}

CoefficientWeights coefficient_weights(const ForceWeights& forces, double aoa_deg) {
    const double a = aoa_deg * kPi / 180.0;
    const double ca = std::cos(a);
    const double sa = std::sin(a);
    CoefficientWeights cw;
    cw.cells = forces.cells;
    const std::size_t m = forces.fx.size();
    cw.rows[0].resize(m);
    cw.rows[1].resize(m);
    cw.rows[2] = forces.mz;
    for (std::size_t k = 0; k < m; ++k) {
        cw.rows[0][k] = forces.fy[k] * ca - forces.fx[k] * sa;
        cw.rows[1][k] = forces.fx[k] * ca + forces.fy[k] * sa;
    }
    return cw;
}

AeroCoefficients integrate_coefficients(const ForceWeights& weights, const SurfaceFlow& flow, double aoa_deg) {
    if (flow.data.size() != weights.fx.size())
        throw ConfigError("integrate_coefficients: flow and mesh sizes differ");
    double fx = 0.0, fy = 0.0, mz = 0.0;
    for (std::size_t k = 0; k < flow.data.size(); ++k) {
        fx += weights.fx[k] * flow.data[k];
        fy += weights.fy[k] * flow.data[k];
        mz += weights.mz[k] * flow.data[k];
    }
    const double a = aoa_deg * kPi / 180.0;
    return {fy * std::cos(a) - fx * std::sin(a), fx * std::cos(a) + fy * std::sin(a), mz};
}

AeroCoefficients integrate_coefficients(const geometry::SurfaceMesh& mesh, double mean_aerodynamic_chord,
                                        const SurfaceFlow& flow, const OperatingCondition& oc) {
    if (flow.height != mesh.height || flow.width != mesh.width)
        throw ConfigError("integrate_coefficients: flow shape does not match mesh");
    return integrate_coefficients(force_weights(mesh, mean_aerodynamic_chord), flow, oc.aoa_deg);
}

AeroCoefficients integrate_coefficients(const geometry::SurfaceMesh& mesh, const geometry::WingShape& shape,
                                        const SurfaceFlow& flow, const OperatingCondition& oc) {
    const geometry::Planform planform(shape.planform);
    return integrate_coefficients(mesh, planform.mean_aerodynamic_chord(), flow, oc);
}

IntegrationSensitivity integration_sensitivity(const geometry::SurfaceMesh& mesh, const OperatingCondition& oc) {
    const double a = oc.aoa_deg * kPi / 180.0;
    const double ca = std::cos(a);
    const double sa = std::sin(a);
    const std::size_t n = mesh.cells();
    IntegrationSensitivity s;
    s.dcl_dcp.resize(n);
    s.dcd_dcp.resize(n);
    for (std::size_t c = 0; c < n; ++c) {
        const double gx = -mesh.normals[c] * mesh.areas[c] / kReferenceArea;
        const double gy = -mesh.normals[n + c] * mesh.areas[c] / kReferenceArea;
        s.dcl_dcp[c] = gy * ca - gx * sa;
        s.dcd_dcp[c] = gx * ca + gy * sa;
    }
    return s;
}

FlowMetrics field_error(std::span<const SurfaceFlow> pred, std::span<const SurfaceFlow> truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw ConfigError("field_error: prediction and truth batches must be non-empty and equal in size");
    FlowMetrics m;
    std::array<double, 3> sums{0.0, 0.0, 0.0};
    for (std::size_t s = 0; s < pred.size(); ++s) {
        if (pred[s].data.size() != truth[s].data.size() || pred[s].height != truth[s].height)
            throw ConfigError("field_error: sample shapes differ");
        bool degenerate = false;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            const auto t = truth[s].channel(ch);
            const auto p = pred[s].channel(ch);
            const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
            const double range = *hi - *lo;
            if (!(range > 0.0)) {
                degenerate = true;
                continue;
            }
            double mae = 0.0;
            for (std::size_t k = 0; k < t.size(); ++k) mae += std::abs(p[k] - t[k]);
            sums[ch] += 100.0 * mae / static_cast<double>(t.size()) / range;
        }
        if (degenerate) ++m.degenerate_samples;
    }
    const double count = static_cast<double>(pred.size());
    m.d_cp = sums[0] / count;
    m.d_cf_tau = sums[1] / count;
    m.d_cf_z = sums[2] / count;
    m.sfe = (m.d_cp + m.d_cf_tau + m.d_cf_z) / 3.0;
    return m;
}

FlowMetrics field_error(const SurfaceFlow& pred, const SurfaceFlow& truth) {
    return field_error(std::span<const SurfaceFlow>(&pred, 1), std::span<const SurfaceFlow>(&truth, 1));
}

CoefficientMetrics coefficient_error(std::span<const AeroCoefficients> pred, std::span<const AeroCoefficients> truth) {
    if (pred.empty()) throw ConfigError("coefficient_error: empty list");
    if (pred.size() != truth.size()) throw ConfigError("coefficient_error: list lengths differ");
    CoefficientMetrics m;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        m.d_cl += std::abs(pred[i].cl - truth[i].cl);
        m.d_cd += std::abs(pred[i].cd - truth[i].cd);
        m.d_cmz += std::abs(pred[i].cmz - truth[i].cmz);
    }
    const double n = static_cast<double>(pred.size());
    m.d_cl /= n;
    m.d_cd /= n;
    m.d_cmz /= n;
    return m;
}

}  // namespace aerotx::aero
