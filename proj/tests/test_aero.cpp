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
#include <numbers>
#include <random>

#include "aerotx/aero.hpp"
#include "aerotx/dataset.hpp"

using namespace aerotx;
using namespace aerotx::aero;
using geometry::CellKind;

namespace {

constexpr double kPi = std::numbers::pi;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

SurfaceFlow random_flow(std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    SurfaceFlow f(h, w);
    for (auto& v : f.data) v = u(rng);
    return f;
}

geometry::WingShape flat_plate_wing() {
    geometry::WingShape w;
    w.planform = geometry::baseline_planform();
    w.sections = {{0.0, geometry::CstAirfoil{}}};
    return w;
}

}  // namespace

TEST(Oracle, GoldenCellByHand) {
    const double alpha_e = 0.02;
    const OperatingCondition oc{0.85, alpha_e * 180.0 / kPi};
    const SectionState s{.chord = 0.3, .thickness = 0.1, .camber = 0.02, .twist_deg = 0.0};
    const double sweep = 35.0 * kPi / 180.0;
    const double x = 0.5;

    const double beta = std::sqrt(std::max(1.0 - std::pow(0.85 * std::cos(sweep), 2), 0.04));
    const double l = std::sqrt((1.0 - x) / (x + 0.01));
    const double load = 2.0 * alpha_e + 8.0 * 0.02;
    const double thick = 4.0 * 0.1 * std::sin(kPi * x) / beta;
    const double as = 0.8 * (0.85 - 0.72) / beta;
    const double xs = 0.15 + 2.5 * (0.85 - 0.72) - 0.5 * alpha_e;
    const double cf = 0.0576 * std::pow(2e7 * 0.3 * (x + 0.02), -0.2);

    const auto up = oracle_cell(CellKind::upper, x, s, 35.0, oc);
    EXPECT_NEAR(up.cp, -load * l / beta - thick + as * sigmoid((x - xs) / 0.03), 1e-14);
    EXPECT_NEAR(up.cf_tau, 0.5 * cf, 1e-16);  // aft of the shock
    EXPECT_NEAR(up.cf_z, 0.2 * 0.5 * cf * std::tan(sweep) * (1.0 - x), 1e-16);

    const auto lo = oracle_cell(CellKind::lower, x, s, 35.0, oc);
    EXPECT_NEAR(lo.cp, 0.3 * load * l / beta - thick, 1e-14);
    EXPECT_NEAR(lo.cf_tau, cf, 1e-16);

    EXPECT_EQ(oracle_cell(CellKind::trailing_edge, 1.0, s, 35.0, oc).cp, 0.2);

    // Pinned literal of the same evaluation, so a formula drift in both places is still caught.
    EXPECT_NEAR(up.cp, -0.722688902, 1e-9);
}

TEST(Oracle, ZeroEffectiveIncidenceLeavesThicknessOnly) {
    const SectionState s{.chord = 0.3, .thickness = 0.12, .camber = 0.0, .twist_deg = -3.0};
    const OperatingCondition oc{0.7, 3.0};  // alpha_e = 0, subcritical
    for (double x : {0.05, 0.3, 0.7}) {
        const auto up = oracle_cell(CellKind::upper, x, s, 30.0, oc);
        const auto lo = oracle_cell(CellKind::lower, x, s, 30.0, oc);
        EXPECT_EQ(up.cp, lo.cp);
    }
}

TEST(Oracle, SubcriticalHasNoShock) {
    const SectionState s{.chord = 0.3, .thickness = 0.1, .camber = 0.01, .twist_deg = 0.0};
    const OperatingCondition oc{0.72, 4.0};
    const OperatingCondition oc_low{0.72, 4.0};
    for (double x = 0.01; x < 1.0; x += 0.01) {
        const auto up = oracle_cell(CellKind::upper, x, s, 30.0, oc);
        const auto lo = oracle_cell(CellKind::lower, x, s, 30.0, oc_low);
        EXPECT_EQ(up.cf_tau, lo.cf_tau);  // no halving anywhere
    }
}

TEST(Oracle, Deterministic) {
    const auto w = dataset::baseline_wing();
    const auto m = geometry::build_surface_mesh(w, {64, 32});
    const auto a = oracle_flow(m, w, {0.85, 2.0});
    const auto b = oracle_flow(m, w, {0.85, 2.0});
    EXPECT_EQ(a.data, b.data);
    for (double v : a.data) ASSERT_TRUE(std::isfinite(v));
}

TEST(Oracle, RejectsInvalidCondition) {
    const auto w = dataset::baseline_wing();
    const auto m = geometry::build_surface_mesh(w, {32, 8});
    EXPECT_THROW(oracle_flow(m, w, {1.2, 2.0}), ConfigError);
    EXPECT_THROW(oracle_flow(m, w, {0.8, 20.0}), ConfigError);
}

TEST(Integration, UniformPressureOnClosedSurface) {
    const auto w = dataset::baseline_wing();
    const auto m = geometry::build_surface_mesh(w);
    SurfaceFlow f(m.height, m.width);
    std::fill(f.data.begin(), f.data.begin() + m.cells(), -1.0);
    const auto c = integrate_coefficients(m, w, f, {0.85, 2.0});
    EXPECT_NEAR(c.cl, 0.0, 1e-8);
    EXPECT_NEAR(c.cd, 0.0, 1e-8);
}

TEST(Integration, FlatPlatePressureJump) {
    const auto w = flat_plate_wing();
    const auto m = geometry::build_surface_mesh(w, {64, 32});
    SurfaceFlow f(m.height, m.width);
    double plate_area = 0.0;
    for (std::size_t i = 0; i < m.height; ++i)
        for (std::size_t j = 0; j < m.width; ++j) {
            const auto kind = geometry::cell_kind(i, m.height);
            if (kind == CellKind::trailing_edge) continue;
            f.data[m.cell(i, j)] = kind == CellKind::upper ? -0.5 : 0.5;
            if (kind == CellKind::upper) plate_area += m.area(i, j);
        }
    const auto c = integrate_coefficients(m, w, f, {0.8, 0.0});
    EXPECT_NEAR(c.cl, plate_area / kReferenceArea, 1e-12);
    EXPECT_NEAR(c.cd, 0.0, 1e-12);
    EXPECT_NEAR(plate_area, 0.5, 1e-3);  // semispan of an S_ref = 1 wing
}

TEST(Integration, Linearity) {
    const auto w = dataset::baseline_wing();
    const auto m = geometry::build_surface_mesh(w, {64, 32});
    const auto f1 = random_flow(64, 32, 1);
    const auto f2 = random_flow(64, 32, 2);
    SurfaceFlow mix(64, 32);
    const double a = 0.7, b = -1.3;
    for (std::size_t k = 0; k < mix.data.size(); ++k) mix.data[k] = a * f1.data[k] + b * f2.data[k];
    const OperatingCondition oc{0.8, 3.0};
    const auto c1 = integrate_coefficients(m, w, f1, oc);
    const auto c2 = integrate_coefficients(m, w, f2, oc);
    const auto cm = integrate_coefficients(m, w, mix, oc);
    EXPECT_NEAR(cm.cl, a * c1.cl + b * c2.cl, 1e-10);
    EXPECT_NEAR(cm.cd, a * c1.cd + b * c2.cd, 1e-10);
    EXPECT_NEAR(cm.cmz, a * c1.cmz + b * c2.cmz, 1e-10);
}

TEST(Integration, ZeroAreaCellsContributeNothing) {
    const auto w = flat_plate_wing();
    const auto m = geometry::build_surface_mesh(w, {32, 8});
    SurfaceFlow f(m.height, m.width);
    for (std::size_t j = 0; j < m.width; ++j)
        for (std::size_t ch = 0; ch < 3; ++ch) f.data[ch * m.cells() + m.cell(31, j)] = 1e6;
    const auto c = integrate_coefficients(m, w, f, {0.8, 2.0});
    EXPECT_EQ(c.cl, 0.0);
    EXPECT_EQ(c.cd, 0.0);
    EXPECT_EQ(c.cmz, 0.0);
}

// Strip theory over the analytic sections: per spanwise strip, integrate the oracle pressure and
// friction around the exact CST contour (dense cosine quadrature), rotate by twist and aoa.
TEST(Integration, OracleWingAgainstStripQuadrature) {
    const auto w = dataset::baseline_wing();
    const geometry::MeshResolution res{256, 128};
    const auto m = geometry::build_surface_mesh(w, res);
    const OperatingCondition oc{0.85, 2.0};
    const auto mesh_c = integrate_coefficients(m, w, oracle_flow(m, w, oc), oc);

    const geometry::Planform pf(w.planform);
    const double dz = pf.b_half() / double(res.span_cells);
    const int nq = 4000;
    double fx = 0.0, fy = 0.0;
    for (std::size_t j = 0; j < res.span_cells; ++j) {
        const double eta = (double(j) + 0.5) / double(res.span_cells);
        const auto s = section_state(w, pf, eta);
        const auto af = w.section_at(eta);
        double sx = 0.0, sy = 0.0;  // section-frame force per unit span / chord
        for (int q = 0; q < nq; ++q) {
            const double p0 = kPi * q / nq, p1 = kPi * (q + 1) / nq;
            const double x0 = 0.5 * (1 - std::cos(p0)), x1 = 0.5 * (1 - std::cos(p1));
            const double xm = 0.5 * (x0 + x1), dx = x1 - x0;
            for (auto surf : {geometry::Surface::upper, geometry::Surface::lower}) {
                const bool up = surf == geometry::Surface::upper;
                const double dy = geometry::cst_evaluate(af, x1, surf) - geometry::cst_evaluate(af, x0, surf);
                const auto cell = oracle_cell(up ? CellKind::upper : CellKind::lower, xm, s, w.planform.sweep_le, oc);
                // Outward normal times ds: upper (-dy, dx), lower (dy, -dx). Pressure acts along -n.
                const double nx = up ? -dy : dy, ny = up ? dx : -dx;
                sx += -cell.cp * nx + cell.cf_tau * dx;
                sy += -cell.cp * ny + cell.cf_tau * dy;
            }
        }
        const auto te = oracle_cell(CellKind::trailing_edge, 1.0, s, w.planform.sweep_le, oc);
        sx += -te.cp * af.te_thickness;
        const double th = s.twist_deg * kPi / 180.0;  // nose up: rotate the section clockwise
        const double gx = sx * std::cos(th) + sy * std::sin(th);
        const double gy = -sx * std::sin(th) + sy * std::cos(th);
        fx += gx * s.chord * dz;
        fy += gy * s.chord * dz;
    }
    const double a = oc.aoa_deg * kPi / 180.0;
    const double cl = (fy * std::cos(a) - fx * std::sin(a)) / kReferenceArea;
    const double cd = (fx * std::cos(a) + fy * std::sin(a)) / kReferenceArea;
    EXPECT_NEAR(mesh_c.cl, cl, 0.01 * std::abs(cl));
    EXPECT_NEAR(mesh_c.cd, cd, 0.05 * std::abs(cd) + 2e-4);
    RecordProperty("strip_cl", std::to_string(cl));
    RecordProperty("mesh_cl", std::to_string(mesh_c.cl));
}

TEST(Sensitivity, ZeroAoaIsMinusNormalY) {
    const auto m = geometry::build_surface_mesh(dataset::baseline_wing(), {64, 32});
    const auto s = integration_sensitivity(m, {0.8, 0.0});
    for (std::size_t c = 0; c < m.cells(); ++c)
        ASSERT_NEAR(s.dcl_dcp[c], -m.normals[m.cells() + c] * m.areas[c] / kReferenceArea, 1e-15);
}

TEST(Sensitivity, MatchesFiniteDifferences) {
    const auto w = dataset::baseline_wing();
    const auto m = geometry::build_surface_mesh(w, {64, 32});
    const OperatingCondition oc{0.8, 3.5};
    const auto s = integration_sensitivity(m, oc);
    auto f = random_flow(64, 32, 9);
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> pick(0, m.cells() - 1);
    for (int t = 0; t < 50; ++t) {
        const std::size_t c = pick(rng);
        const double h = 1e-3, x0 = f.data[c];
        f.data[c] = x0 + h;
        const auto p = integrate_coefficients(m, w, f, oc);
        f.data[c] = x0 - h;
        const auto n = integrate_coefficients(m, w, f, oc);
        f.data[c] = x0;
        EXPECT_NEAR((p.cl - n.cl) / (2 * h), s.dcl_dcp[c], 1e-7);
        EXPECT_NEAR((p.cd - n.cd) / (2 * h), s.dcd_dcp[c], 1e-7);
    }
}

TEST(Sensitivity, ScalesWithArea) {
    auto m = geometry::build_surface_mesh(dataset::baseline_wing(), {32, 8});
    const auto s1 = integration_sensitivity(m, {0.8, 2.0});
    for (auto& a : m.areas) a *= 2.0;
    const auto s2 = integration_sensitivity(m, {0.8, 2.0});
    for (std::size_t c = 0; c < m.cells(); ++c) EXPECT_NEAR(s2.dcl_dcp[c], 2.0 * s1.dcl_dcp[c], 1e-15);
}

TEST(FieldError, IdenticalIsZero) {
    const auto f = random_flow(8, 8, 3);
    const auto e = field_error(f, f);
    EXPECT_EQ(e.sfe, 0.0);
    EXPECT_EQ(e.d_cp, 0.0);
}

TEST(FieldError, ConstantOffset) {
    SurfaceFlow truth(4, 4);
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t i = 0; i < 16; ++i) truth.data[ch * 16 + i] = -1.0 + 2.0 * double(i) / 15.0;
    SurfaceFlow pred = truth;
    for (auto& v : pred.data) v += 0.01;
    const auto e = field_error(pred, truth);
    EXPECT_NEAR(e.d_cp, 0.5, 1e-12);
    EXPECT_NEAR(e.sfe, 0.5, 1e-12);
}

TEST(FieldError, BruteForce) {
    std::vector<SurfaceFlow> pred, truth;
    for (int s = 0; s < 3; ++s) {
        pred.push_back(random_flow(4, 4, 10 + s));
        truth.push_back(random_flow(4, 4, 20 + s));
    }
    double expect[3] = {0, 0, 0};
    for (int s = 0; s < 3; ++s)
        for (int ch = 0; ch < 3; ++ch) {
            double lo = 1e300, hi = -1e300, sum = 0.0;
            for (int i = 0; i < 16; ++i) {
                lo = std::min(lo, truth[s].data[ch * 16 + i]);
                hi = std::max(hi, truth[s].data[ch * 16 + i]);
                sum += std::abs(pred[s].data[ch * 16 + i] - truth[s].data[ch * 16 + i]);
            }
            expect[ch] += sum / 16.0 / (hi - lo) * 100.0 / 3.0;
        }
    const auto e = field_error(pred, truth);
    EXPECT_NEAR(e.d_cp, expect[0], 1e-12);
    EXPECT_NEAR(e.d_cf_tau, expect[1], 1e-12);
    EXPECT_NEAR(e.d_cf_z, expect[2], 1e-12);
    EXPECT_NEAR(e.sfe, (expect[0] + expect[1] + expect[2]) / 3.0, 1e-12);
}

TEST(FieldError, ShiftInvariance) {
    const auto p = random_flow(4, 4, 1), t = random_flow(4, 4, 2);
    auto ps = p, ts = t;
    for (auto& v : ps.data) v += 3.0;
    for (auto& v : ts.data) v += 3.0;
    EXPECT_NEAR(field_error(p, t).sfe, field_error(ps, ts).sfe, 1e-12);
}

TEST(FieldError, ZeroRangeIsFlagged) {
    SurfaceFlow t(2, 2), p(2, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        t.data[i] = double(i);
        t.data[4 + i] = double(i);
    }
    for (auto& v : p.data) v = 1.0;
    const auto e = field_error(p, t);
    EXPECT_EQ(e.d_cf_z, 0.0);
    EXPECT_EQ(e.degenerate_samples, 1u);
}

TEST(CoefficientError, Cases) {
    const std::vector<AeroCoefficients> a{{0.5, 0.02, -0.1}};
    const std::vector<AeroCoefficients> b{{0.52, 0.02, -0.1}};
    EXPECT_EQ(coefficient_error(a, a).d_cl, 0.0);
    EXPECT_NEAR(coefficient_error(a, b).d_cl, 0.02, 1e-15);

    const std::vector<AeroCoefficients> p{{0.1, 0.01, 0.3}, {0.4, 0.03, -0.2}, {0.2, 0.02, 0.0}};
    const std::vector<AeroCoefficients> t{{0.15, 0.011, 0.25}, {0.3, 0.028, -0.1}, {0.2, 0.025, 0.05}};
    const auto e = coefficient_error(p, t);
    EXPECT_NEAR(e.d_cl, (0.05 + 0.1 + 0.0) / 3.0, 1e-15);
    EXPECT_NEAR(e.d_cd, (0.001 + 0.002 + 0.005) / 3.0, 1e-15);
    EXPECT_NEAR(e.d_cmz, (0.05 + 0.1 + 0.05) / 3.0, 1e-15);
    EXPECT_THROW(coefficient_error({}, {}), Error);
}
