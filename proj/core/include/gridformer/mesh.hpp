// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
// Isosurface extraction. Scalar lattices have res + 1 samples per axis at
// coordinates i / res, so `res` counts cells; this differs from the
// cell-centred feature grids used by the model.
//
#pragma once

#include <gridformer/ops.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gridformer {

struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;
    /// Unit, area-weighted vertex normals.
    std::vector<Vec3> normals;

    bool empty() const { return triangles.empty(); }
};

/// Recomputes `normals` from the triangles.
void compute_vertex_normals(Mesh& mesh);

struct ScalarGrid {
    int resolution = 0;
    std::vector<double> values; // (res + 1)^3, x-major

    ScalarGrid() = default;
    explicit ScalarGrid(int res);

    std::size_t points_per_axis() const { return static_cast<std::size_t>(resolution) + 1; }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
        const auto n = points_per_axis();
        return (i * n + j) * n + k;
    }
    /// Lattice coordinate of sample (i, j, k).
    Vec3 coord(std::size_t i, std::size_t j, std::size_t k) const;
};

/// Marching cubes at threshold tau; corners with value < tau count as
/// outside. Vertices on shared edges are welded, vertices landing on a
/// lattice sample are shared by all edges through it, degenerate triangles
/// are dropped and faces are wound so normals point toward lower values.
Mesh marching_cubes(const ScalarGrid& grid, double tau = 0.5);

/// Batched field evaluation: one value per coordinate, in order.
using FieldFunction = std::function<std::vector<double>(std::span<const Vec3>)>;

/// Samples the field on the full lattice.
ScalarGrid sample_dense(const FieldFunction& field, int resolution);

struct MiseOptions {
    int initial_resolution = 32;
    int steps = 2;
    double tau = 0.5;
};

struct MiseResult {
    Mesh mesh;
    ScalarGrid grid;
    std::size_t evaluations = 0;
};

/// Coarse-to-fine extraction: refines only cells whose corners straddle
/// tau (plus one ring of neighbours), fills the remaining samples from the
/// surrounding coarse cell and runs marching cubes on the final lattice.
MiseResult mise_extract(const FieldFunction& field, const MiseOptions& options = {});

/// Reference path: dense sampling at the final MISE resolution.
MiseResult dense_extract(const FieldFunction& field, int resolution, double tau = 0.5);

/// "v x y z" lines (9 significant digits) then 1-based "f a b c" lines.
std::string format_obj(const Mesh& mesh);
void write_obj(const std::filesystem::path& path, const Mesh& mesh);
Mesh parse_obj(const std::string& text);
Mesh read_obj(const std::filesystem::path& path);

} // namespace gridformer
