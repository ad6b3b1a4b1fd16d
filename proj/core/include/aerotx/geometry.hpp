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
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace aerotx::geometry {

/// Global wing parameters. Angles in degrees, lengths normalized so S_ref = 1.
struct PlanformParams {
    double sweep_le = 0.0;       ///< leading-edge sweep, degrees
    double aspect_ratio = 8.0;   ///< AR = 2 b_half^2 / S_ref
    double taper_ratio = 0.3;    ///< c_tip / c_root
    double kink_eta = 0.37;      ///< trailing-edge kink, fraction of semispan
    double root_adjust = 0.5;    ///< inner-panel root chord extension (kappa)

    /// Throws ConfigError if any invariant is violated.
    void validate() const;
};

enum class SpanwiseKind {
    bspline5,  ///< interpolating cubic spline through 5 controls
    linear7,   ///< piecewise linear through 7 controls
    linear,    ///< piecewise linear through >= 2 controls
};

struct SpanwiseDistribution {
    std::vector<double> control_etas;
    std::vector<double> control_values;
    SpanwiseKind kind = SpanwiseKind::linear;

    static SpanwiseDistribution constant(double value);

    void validate() const;
};

/// Class-shape-transformation airfoil, class exponents (0.5, 1.0), Bernstein degree 9.
struct CstAirfoil {
    static constexpr std::size_t kCoefficients = 10;

    std::array<double, kCoefficients> upper{};
    std::array<double, kCoefficients> lower{};
    double te_thickness = 0.0;

    void validate() const;
};

enum class Surface { upper, lower };

/// y/c of the airfoil surface at chord fraction xbar. Throws DomainError for xbar outside [0,1].
double cst_evaluate(const CstAirfoil& airfoil, double xbar, Surface surface);

/// Evaluates the distribution at span fraction eta. Throws DomainError outside [0,1].
double spanwise_evaluate(const SpanwiseDistribution& dist, double eta);

/// True if upper(x) >= lower(x) on a dense chordwise grid.
bool is_non_intersecting(const CstAirfoil& airfoil);

struct SectionControl {
    double eta = 0.0;
    CstAirfoil airfoil;
};

/// Complete parametric wing.
///
/// With a single section control the airfoil is a baseline whose thickness and camber
/// are scaled spanwise by `thickness` and `camber`. With several controls the CST
/// coefficients are linearly interpolated between them (and still scaled).
struct WingShape {
    PlanformParams planform;
    SpanwiseDistribution thickness = SpanwiseDistribution::constant(1.0);
    SpanwiseDistribution camber = SpanwiseDistribution::constant(1.0);
    SpanwiseDistribution dihedral = SpanwiseDistribution::constant(0.0);  ///< y_LE, S_ref units
    SpanwiseDistribution twist = SpanwiseDistribution::constant(0.0);     ///< degrees, nose up
    std::vector<SectionControl> sections;

    void validate() const;

    /// Sectional airfoil at eta after interpolation and thickness/camber scaling.
    CstAirfoil section_at(double eta) const;
};

/// Planform realized from PlanformParams. All lengths are in S_ref = 1 units.
class Planform {
public:
    explicit Planform(const PlanformParams& params);

    double b_half() const noexcept { return b_half_; }
    double chord(double eta) const;
    double x_le(double eta) const;
    double root_chord() const noexcept { return c_root_; }
    double kink_chord() const noexcept { return c_kink_; }
    double tip_chord() const noexcept { return c_tip_; }
    double kink_eta() const noexcept { return kink_eta_; }

    /// 2 b_half ∫ c dη, exact for the piecewise-linear chord.
    double area() const;
    /// (2/S) ∫ c² dy over the semispan.
    double mean_aerodynamic_chord() const;

private:
    double b_half_ = 0.0;
    double tan_sweep_ = 0.0;
    double kink_eta_ = 0.0;
    double c_root_ = 0.0;
    double c_kink_ = 0.0;
    double c_tip_ = 0.0;
};

Planform build_planform(const PlanformParams& params);

/// Chordwise cells around the closed section loop and spanwise cells.
struct MeshResolution {
    std::size_t chord_cells = 256;
    std::size_t span_cells = 128;

    void validate() const;
};

/// Cell-centred structured surface grid, channel-first [3, H, W] storage.
///
/// Row index i runs around the section loop (H = chord_cells), column j along the span
/// (W = span_cells). Node arrays carry W + 1 sections.
struct SurfaceMesh {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> cell_centers;  // [3, H, W]
    std::vector<double> normals;       // [3, H, W]
    std::vector<double> areas;         // [H, W]
    std::vector<double> nodes;         // [3, H, W + 1]
    std::vector<std::uint8_t> degenerate;  // [H, W], 1 where area < 1e-14

    std::size_t cells() const noexcept { return height * width; }
    std::size_t cell(std::size_t i, std::size_t j) const noexcept { return i * width + j; }

    std::array<double, 3> center(std::size_t i, std::size_t j) const;
    std::array<double, 3> normal(std::size_t i, std::size_t j) const;
    std::array<double, 3> node(std::size_t i, std::size_t j) const;
    double area(std::size_t i, std::size_t j) const { return areas[cell(i, j)]; }

    double total_area() const;
    /// Σ n_i A_i.
    std::array<double, 3> vector_area() const;
};

/// Chord fraction of node k on a loop of n nodes (node 0 lower TE, n/2 LE, n-1 upper TE).
double node_chord_fraction(std::size_t k, std::size_t n);
/// Whether node/cell k belongs to the upper surface.
bool node_on_upper(std::size_t k, std::size_t n);

enum class CellKind { lower, upper, trailing_edge };

/// Classification of chordwise cell k on a loop of n cells.
CellKind cell_kind(std::size_t k, std::size_t n);
/// Chord fraction at the cell centre (mean of its two nodes).
double cell_chord_fraction(std::size_t k, std::size_t n);
/// Span fraction at the centre of spanwise cell j of w.
double cell_span_fraction(std::size_t j, std::size_t w);

struct CellGeometry {
    std::array<double, 3> normal;
    double area = 0.0;
    bool degenerate = false;
};

/// Normal and area of a quad from its corners, ordered (k,j), (k+1,j), (k+1,j+1), (k,j+1).
CellGeometry cell_geometry(const std::array<std::array<double, 3>, 4>& corners);

SurfaceMesh build_surface_mesh(const WingShape& shape, const MeshResolution& resolution = {});

/// Planform fixed by the fine-tuning design space; used as the demo wing.
PlanformParams baseline_planform();

void to_json(nlohmann::json& j, const PlanformParams& p);
void from_json(const nlohmann::json& j, PlanformParams& p);
void to_json(nlohmann::json& j, const SpanwiseDistribution& d);
void from_json(const nlohmann::json& j, SpanwiseDistribution& d);
void to_json(nlohmann::json& j, const CstAirfoil& a);
void from_json(const nlohmann::json& j, CstAirfoil& a);
void to_json(nlohmann::json& j, const WingShape& s);
void from_json(const nlohmann::json& j, WingShape& s);

}  // namespace aerotx::geometry
