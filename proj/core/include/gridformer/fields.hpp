// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
// Training data drawn from analytic shapes: noisy surface point clouds,
// labelled uniform queries, and the boundary subset used for finetuning.
//
#pragma once

#include <gridformer/shapes.hpp>

#include <cstdint>
#include <vector>

namespace gridformer {

struct QuerySet {
    std::vector<Vec3> coords;
    std::vector<std::uint8_t> label;
    std::vector<std::uint8_t> boundary_mask;

    std::size_t size() const { return coords.size(); }
};

/// n points uniform by area on the visible surface, each coordinate then
/// perturbed by N(0, sigma^2) and clamped to [0,1].
std::vector<Vec3> sample_surface(const ShapeSpec& spec, std::size_t n, double sigma, std::uint64_t seed);

/// m points uniform in [0,1]^3 labelled by analytic_occupancy.
QuerySet sample_queries(const ShapeSpec& spec, std::size_t m, std::uint64_t seed);

struct BoundaryResult {
    QuerySet queries;
    std::size_t boundary_count = 0;
    /// Set when no pair of opposite labels lies within the radius; the
    /// mask is then all false.
    bool no_opposite_pairs = false;
};

/// Marks every query that has an opposite-label query within
/// boundary_radius (Euclidean, inclusive). Uses a uniform spatial hash with
/// cells slightly larger than the radius.
BoundaryResult extract_boundary(const QuerySet& queries, double boundary_radius);

struct DataParams {
    std::size_t n_points = 3000;
    double sigma = 0.005;
    std::size_t n_queries = 100000;
    double boundary_radius = 0.08;
    std::uint64_t seed = 0;
};

/// One training scene. Coordinates are stored at single precision on disk,
/// so in memory they are kept rounded to float as well.
struct Dataset {
    std::vector<Vec3> points;
    QuerySet queries;
};

Dataset make_dataset(const ShapeSpec& spec, const DataParams& params);

} // namespace gridformer
