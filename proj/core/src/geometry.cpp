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

#include "aerotx/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "aerotx/error.hpp"

namespace aerotx::geometry {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDegenerateArea = 1e-14;
constexpr std::size_t kIntersectionGrid = 401;

double binomial9(std::size_t i) {
    static constexpr std::array<double, 10> kTable = {1, 9, 36, 84, 126, 126, 84, 36, 9, 1};
    return kTable[i];
}

std::array<double, 3> cross(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm(const std::array<double, 3>& a) {
    return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
}

// Second derivatives of the natural cubic spline through (x, y).
std::vector<double> natural_spline_moments(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    std::vector<double> m(n, 0.0);
    if (n < 3) return m;
    const std::size_t inner = n - 2;
    std::vector<double> diag(inner), upper(inner), rhs(inner);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double h0 = x[i] - x[i - 1];
        const double h1 = x[i + 1] - x[i];
        diag[i - 1] = 2.0 * (h0 + h1);
        upper[i - 1] = h1;
        rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    // Thomas algorithm; the sub-diagonal of row r equals h of segment r.
    for (std::size_t r = 1; r < inner; ++r) {
        const double sub = x[r + 1] - x[r];
        const double w = sub / diag[r - 1];
        diag[r] -= w * upper[r - 1];
        rhs[r] -= w * rhs[r - 1];
    }
    for (std::size_t r = inner; r-- > 0;) {
        const double next = (r + 1 < inner) ? m[r + 2] : 0.0;
        m[r + 1] = (rhs[r] - upper[r] * next) / diag[r];
    }
    return m;
}

std::size_t segment_of(std::span<const double> x, double t) {
    auto it = std::upper_bound(x.begin(), x.end(), t);
    std::size_t seg = (it == x.begin()) ? 0 : static_cast<std::size_t>(it - x.begin()) - 1;
    return std::min(seg, x.size() - 2);
}

CstAirfoil lerp_airfoil(const CstAirfoil& a, const CstAirfoil& b, double t) {
    CstAirfoil out;
    for (std::size_t i = 0; i < CstAirfoil::kCoefficients; ++i) {
        out.upper[i] = a.upper[i] + t * (b.upper[i] - a.upper[i]);
        out.lower[i] = a.lower[i] + t * (b.lower[i] - a.lower[i]);
    }
    out.te_thickness = a.te_thickness + t * (b.te_thickness - a.te_thickness);
    return out;
}

const char* kind_name(SpanwiseKind kind) {
    switch (kind) {
        case SpanwiseKind::bspline5: return "bspline5";
        case SpanwiseKind::linear7: return "linear7";
        case SpanwiseKind::linear: return "linear";
    }
    return "linear";
}

SpanwiseKind kind_from_name(const std::string& name) {
    if (name == "bspline5") return SpanwiseKind::bspline5;
    if (name == "linear7") return SpanwiseKind::linear7;
    if (name == "linear") return SpanwiseKind::linear;
    throw ConfigError("unknown spanwise distribution kind '" + name + "'");
}

}  // namespace

void PlanformParams::validate() const {
    if (!(aspect_ratio > 0.0)) throw ConfigError("aspect_ratio must be > 0");
    if (!(taper_ratio > 0.0 && taper_ratio < 1.0)) throw ConfigError("taper_ratio must lie in (0, 1)");
    if (!(kink_eta > 0.0 && kink_eta < 1.0)) throw ConfigError("kink_eta must lie in (0, 1)");
    // kappa = 0 is accepted as the single-trapezoid limit.
    if (!(root_adjust >= 0.0 && root_adjust <= 1.2)) throw ConfigError("root_adjust must lie in [0, 1.2]");
    if (!(sweep_le >= 0.0 && sweep_le < 60.0)) throw ConfigError("sweep_le must lie in [0, 60) degrees");
}

SpanwiseDistribution SpanwiseDistribution::constant(double value) {
    return {{0.0, 1.0}, {value, value}, SpanwiseKind::linear};
}

void SpanwiseDistribution::validate() const {
    if (control_etas.size() != control_values.size())
        throw ConfigError("spanwise distribution: control_etas and control_values differ in length");
    const std::size_t n = control_etas.size();
    if (kind == SpanwiseKind::bspline5 && n != 5) throw ConfigError("bspline5 needs exactly 5 controls");
    if (kind == SpanwiseKind::linear7 && n != 7) throw ConfigError("linear7 needs exactly 7 controls");
    if (n < 2) throw ConfigError("spanwise distribution needs at least 2 controls");
    if (control_etas.front() != 0.0 || control_etas.back() != 1.0)
        throw ConfigError("spanwise controls must start at eta = 0 and end at eta = 1");
    for (std::size_t i = 1; i < n; ++i) {
        if (!(control_etas[i] > control_etas[i - 1]))
            throw ConfigError("spanwise control etas must be strictly increasing");
    }
    for (double v : control_values) {
        if (!std::isfinite(v)) throw ConfigError("spanwise control value is not finite");
    }
}

void CstAirfoil::validate() const {
    for (std::size_t i = 0; i < kCoefficients; ++i) {
        if (!std::isfinite(upper[i]) || !std::isfinite(lower[i]))
            throw ConfigError("CST coefficient is not finite");
    }
    if (!(te_thickness >= 0.0) || !std::isfinite(te_thickness))
        throw ConfigError("te_thickness must be finite and >= 0");
}

double cst_evaluate(const CstAirfoil& airfoil, double xbar, Surface surface) {
    if (!(xbar >= 0.0 && xbar <= 1.0))
        throw DomainError("cst_evaluate: xbar = " + std::to_string(xbar) + " outside [0, 1]");
    const auto& a = (surface == Surface::upper) ? airfoil.upper : airfoil.lower;
    const double one_minus = 1.0 - xbar;
    double shape = 0.0;
    for (std::size_t i = 0; i < CstAirfoil::kCoefficients; ++i) {
        const int k = static_cast<int>(i);
        shape += a[i] * binomial9(i) * std::pow(xbar, k) * std::pow(one_minus, 9 - k);
    }
    const double class_fn = std::sqrt(xbar) * one_minus;
    const double te = 0.5 * xbar * airfoil.te_thickness;
    return class_fn * shape + (surface == Surface::upper ? te : -te);
}

double spanwise_evaluate(const SpanwiseDistribution& dist, double eta) {
    if (!(eta >= 0.0 && eta <= 1.0))
        throw DomainError("spanwise_evaluate: eta = " + std::to_string(eta) + " outside [0, 1]");
    std::span<const double> x(dist.control_etas);
    std::span<const double> y(dist.control_values);
    const std::size_t seg = segment_of(x, eta);
    const double h = x[seg + 1] - x[seg];
    const double a = (x[seg + 1] - eta) / h;
    const double b = (eta - x[seg]) / h;
    double value = a * y[seg] + b * y[seg + 1];
    if (dist.kind == SpanwiseKind::bspline5) {
        const auto m = natural_spline_moments(x, y);
        value += ((a * a * a - a) * m[seg] + (b * b * b - b) * m[seg + 1]) * h * h / 6.0;
    }
    return value;
}

bool is_non_intersecting(const CstAirfoil& airfoil) {
    for (std::size_t i = 0; i < kIntersectionGrid; ++i) {
        const double x = 0.5 * (1.0 - std::cos(kPi * static_cast<double>(i) / (kIntersectionGrid - 1)));
        const double gap = cst_evaluate(airfoil, x, Surface::upper) - cst_evaluate(airfoil, x, Surface::lower);
        if (gap < -1e-12) return false;
    }
    return true;
}

void WingShape::validate() const {
    planform.validate();
    thickness.validate();
    camber.validate();
    dihedral.validate();
    twist.validate();
    if (sections.empty()) throw ConfigError("wing needs at least one section airfoil");
    if (sections.size() > 1) {
        if (sections.front().eta != 0.0 || sections.back().eta != 1.0)
            throw ConfigError("section airfoils must span eta = 0 to eta = 1");
        for (std::size_t i = 1; i < sections.size(); ++i) {
            if (!(sections[i].eta > sections[i - 1].eta))
                throw ConfigError("section airfoil etas must be strictly increasing");
        }
    }
    for (const auto& s : sections) s.airfoil.validate();
}

CstAirfoil WingShape::section_at(double eta) const {
    CstAirfoil base;
    if (sections.size() == 1) {
        base = sections.front().airfoil;
    } else {
        std::vector<double> etas(sections.size());
        std::transform(sections.begin(), sections.end(), etas.begin(), [](const auto& s) { return s.eta; });
        const std::size_t seg = segment_of(etas, eta);
        const double t = (eta - etas[seg]) / (etas[seg + 1] - etas[seg]);
        base = lerp_airfoil(sections[seg].airfoil, sections[seg + 1].airfoil, t);
    }
    const double st = spanwise_evaluate(thickness, eta);
    const double sc = spanwise_evaluate(camber, eta);
    CstAirfoil out;
    for (std::size_t i = 0; i < CstAirfoil::kCoefficients; ++i) {
        const double mean = 0.5 * (base.upper[i] + base.lower[i]);
        const double half = 0.5 * (base.upper[i] - base.lower[i]);
        out.upper[i] = sc * mean + st * half;
        out.lower[i] = sc * mean - st * half;
    }
    out.te_thickness = st * base.te_thickness;
    return out;
}

Planform::Planform(const PlanformParams& params) {
    params.validate();
    b_half_ = std::sqrt(params.aspect_ratio / 2.0);
    tan_sweep_ = std::tan(params.sweep_le * kPi / 180.0);
    kink_eta_ = params.kink_eta;
    // Unscaled: outer trapezoid has c_trap(0) = 1; the inner panel raises the root by kappa.
    const double root = 1.0 + params.root_adjust;
    const double tip = params.taper_ratio * root;
    const double kink = 1.0 + (tip - 1.0) * kink_eta_;
    if (!(tip > 0.0) || !(kink > 0.0)) throw ConstructionError("planform produces a non-positive chord");
    const double half_area = kink_eta_ * 0.5 * (root + kink) + (1.0 - kink_eta_) * 0.5 * (kink + tip);
    const double scale = 1.0 / (2.0 * b_half_ * half_area);
    c_root_ = root * scale;
    c_kink_ = kink * scale;
    c_tip_ = tip * scale;
}

double Planform::chord(double eta) const {
    if (eta <= kink_eta_) return c_root_ + (c_kink_ - c_root_) * (eta / kink_eta_);
    return c_kink_ + (c_tip_ - c_kink_) * ((eta - kink_eta_) / (1.0 - kink_eta_));
}

double Planform::x_le(double eta) const { return eta * b_half_ * tan_sweep_; }

double Planform::area() const {
    const double inner = kink_eta_ * 0.5 * (c_root_ + c_kink_);
    const double outer = (1.0 - kink_eta_) * 0.5 * (c_kink_ + c_tip_);
    return 2.0 * b_half_ * (inner + outer);
}

double Planform::mean_aerodynamic_chord() const {
    auto sq = [](double a, double b) { return (a * a + a * b + b * b) / 3.0; };
    const double integral = kink_eta_ * sq(c_root_, c_kink_) + (1.0 - kink_eta_) * sq(c_kink_, c_tip_);
    return 2.0 * b_half_ * integral / area();
}

Planform build_planform(const PlanformParams& params) { return Planform(params); }

void MeshResolution::validate() const {
    if (chord_cells < 4 || chord_cells % 2 != 0) throw ConfigError("chord_cells must be even and >= 4");
    if (span_cells < 1) throw ConfigError("span_cells must be >= 1");
}

std::array<double, 3> SurfaceMesh::center(std::size_t i, std::size_t j) const {
    const std::size_t n = cells();
    const std::size_t c = cell(i, j);
    return {cell_centers[c], cell_centers[n + c], cell_centers[2 * n + c]};
}

std::array<double, 3> SurfaceMesh::normal(std::size_t i, std::size_t j) const {
    const std::size_t n = cells();
    const std::size_t c = cell(i, j);
    return {normals[c], normals[n + c], normals[2 * n + c]};
}

std::array<double, 3> SurfaceMesh::node(std::size_t i, std::size_t j) const {
    const std::size_t cols = width + 1;
    const std::size_t n = height * cols;
    const std::size_t c = i * cols + j;
    return {nodes[c], nodes[n + c], nodes[2 * n + c]};
}

double SurfaceMesh::total_area() const {
    double sum = 0.0;
    for (double a : areas) sum += a;
    return sum;
}

std::array<double, 3> SurfaceMesh::vector_area() const {
    std::array<double, 3> sum{0.0, 0.0, 0.0};
    const std::size_t n = cells();
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t d = 0; d < 3; ++d) sum[d] += normals[d * n + c] * areas[c];
    }
    return sum;
}

double node_chord_fraction(std::size_t k, std::size_t n) {
    const std::size_t half = n / 2;
    if (k <= half) return 0.5 * (1.0 + std::cos(kPi * static_cast<double>(k) / static_cast<double>(half)));
    return 0.5 * (1.0 - std::cos(kPi * static_cast<double>(k - half) / static_cast<double>(half - 1)));
}

bool node_on_upper(std::size_t k, std::size_t n) { return k > n / 2; }

CellKind cell_kind(std::size_t k, std::size_t n) {
    if (k + 1 == n) return CellKind::trailing_edge;
    return (k < n / 2) ? CellKind::lower : CellKind::upper;
}

double cell_chord_fraction(std::size_t k, std::size_t n) {
    return 0.5 * (node_chord_fraction(k, n) + node_chord_fraction((k + 1) % n, n));
}

double cell_span_fraction(std::size_t j, std::size_t w) {
    return (static_cast<double>(j) + 0.5) / static_cast<double>(w);
}

CellGeometry cell_geometry(const std::array<std::array<double, 3>, 4>& corners) {
    std::array<double, 3> d1{}, d2{};
    for (std::size_t i = 0; i < 3; ++i) {
        d1[i] = corners[2][i] - corners[0][i];
        d2[i] = corners[1][i] - corners[3][i];
    }
    const auto c = cross(d1, d2);
    const double len = norm(c);
    CellGeometry g;
    g.area = 0.5 * len;
    if (g.area < kDegenerateArea) {
        g.normal = {0.0, 1.0, 0.0};
        g.area = 0.0;
        g.degenerate = true;
        return g;
    }
    g.normal = {c[0] / len, c[1] / len, c[2] / len};
    return g;
}

SurfaceMesh build_surface_mesh(const WingShape& shape, const MeshResolution& resolution) {
    shape.validate();
    resolution.validate();
    const Planform planform(shape.planform);

    const std::size_t h = resolution.chord_cells;
    const std::size_t w = resolution.span_cells;
    const std::size_t cols = w + 1;

    SurfaceMesh mesh;
    mesh.height = h;
    mesh.width = w;
    mesh.nodes.assign(3 * h * cols, 0.0);

    std::vector<double> xbar(h);
    for (std::size_t k = 0; k < h; ++k) xbar[k] = node_chord_fraction(k, h);

    const std::size_t plane = h * cols;
    for (std::size_t j = 0; j < cols; ++j) {
        const double eta = static_cast<double>(j) / static_cast<double>(w);
        const CstAirfoil section = shape.section_at(eta);
        if (!is_non_intersecting(section))
            throw ConstructionError("self-intersecting airfoil at eta = " + std::to_string(eta));
        const double chord = planform.chord(eta);
        const double x_le = planform.x_le(eta);
        const double y_le = spanwise_evaluate(shape.dihedral, eta);
        const double theta = spanwise_evaluate(shape.twist, eta) * kPi / 180.0;
        const double ct = std::cos(theta);
        const double st = std::sin(theta);
        const double z = eta * planform.b_half();
        for (std::size_t k = 0; k < h; ++k) {
            const Surface side = node_on_upper(k, h) ? Surface::upper : Surface::lower;
            const double xl = xbar[k] * chord;
            const double yl = cst_evaluate(section, xbar[k], side) * chord;
            // Nose-up rotation about the leading edge.
            const std::size_t idx = k * cols + j;
            mesh.nodes[idx] = x_le + xl * ct + yl * st;
            mesh.nodes[plane + idx] = y_le - xl * st + yl * ct;
            mesh.nodes[2 * plane + idx] = z;
        }
    }

    const std::size_t n = h * w;
    mesh.cell_centers.assign(3 * n, 0.0);
    mesh.normals.assign(3 * n, 0.0);
    mesh.areas.assign(n, 0.0);
    mesh.degenerate.assign(n, 0);
    for (std::size_t k = 0; k < h; ++k) {
        const std::size_t k1 = (k + 1) % h;
        for (std::size_t j = 0; j < w; ++j) {
            const std::array<std::array<double, 3>, 4> corners = {
                mesh.node(k, j), mesh.node(k1, j), mesh.node(k1, j + 1), mesh.node(k, j + 1)};
            const CellGeometry g = cell_geometry(corners);
            const std::size_t c = k * w + j;
            for (std::size_t d = 0; d < 3; ++d) {
                mesh.cell_centers[d * n + c] =
                    0.25 * (corners[0][d] + corners[1][d] + corners[2][d] + corners[3][d]);
                mesh.normals[d * n + c] = g.normal[d];
            }
            mesh.areas[c] = g.area;
            mesh.degenerate[c] = g.degenerate ? 1 : 0;
        }
    }
    return mesh;
}

PlanformParams baseline_planform() {
    return {.sweep_le = 37.16, .aspect_ratio = 8.38, .taper_ratio = 0.275, .kink_eta = 0.368, .root_adjust = 0.670};
}

void to_json(nlohmann::json& j, const PlanformParams& p) {
    j = {{"sweep_le", p.sweep_le},
         {"aspect_ratio", p.aspect_ratio},
         {"taper_ratio", p.taper_ratio},
         {"kink_eta", p.kink_eta},
         {"root_adjust", p.root_adjust}};
}

void from_json(const nlohmann::json& j, PlanformParams& p) {
    j.at("sweep_le").get_to(p.sweep_le);
    j.at("aspect_ratio").get_to(p.aspect_ratio);
    j.at("taper_ratio").get_to(p.taper_ratio);
    j.at("kink_eta").get_to(p.kink_eta);
    j.at("root_adjust").get_to(p.root_adjust);
}

void to_json(nlohmann::json& j, const SpanwiseDistribution& d) {
    j = {{"control_etas", d.control_etas}, {"control_values", d.control_values}, {"kind", kind_name(d.kind)}};
}

void from_json(const nlohmann::json& j, SpanwiseDistribution& d) {
    j.at("control_etas").get_to(d.control_etas);
    j.at("control_values").get_to(d.control_values);
    d.kind = kind_from_name(j.at("kind").get<std::string>());
}

void to_json(nlohmann::json& j, const CstAirfoil& a) {
    j = {{"upper", a.upper}, {"lower", a.lower}, {"te_thickness", a.te_thickness}};
}

void from_json(const nlohmann::json& j, CstAirfoil& a) {
    j.at("upper").get_to(a.upper);
    j.at("lower").get_to(a.lower);
    a.te_thickness = j.value("te_thickness", 0.0);
}

void to_json(nlohmann::json& j, const WingShape& s) {
    nlohmann::json sections = nlohmann::json::array();
    for (const auto& sec : s.sections) sections.push_back({{"eta", sec.eta}, {"airfoil", sec.airfoil}});
    j = {{"planform", s.planform},
         {"thickness_dist", s.thickness},
         {"camber_dist", s.camber},
         {"dihedral_dist", s.dihedral},
         {"twist_dist", s.twist},
         {"section_airfoils", sections}};
}

void from_json(const nlohmann::json& j, WingShape& s) {
    j.at("planform").get_to(s.planform);
    s.thickness = j.contains("thickness_dist") ? j.at("thickness_dist").get<SpanwiseDistribution>()
                                               : SpanwiseDistribution::constant(1.0);
    s.camber = j.contains("camber_dist") ? j.at("camber_dist").get<SpanwiseDistribution>()
                                         : SpanwiseDistribution::constant(1.0);
    s.dihedral = j.contains("dihedral_dist") ? j.at("dihedral_dist").get<SpanwiseDistribution>()
                                             : SpanwiseDistribution::constant(0.0);
    s.twist = j.contains("twist_dist") ? j.at("twist_dist").get<SpanwiseDistribution>()
                                       : SpanwiseDistribution::constant(0.0);
    s.sections.clear();
    for (const auto& sec : j.at("section_airfoils")) {
        s.sections.push_back({sec.value("eta", 0.0), sec.at("airfoil").get<CstAirfoil>()});
    }
}

}  // namespace aerotx::geometry
