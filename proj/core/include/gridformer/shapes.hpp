// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
// Analytic ground-truth shapes in the unit cube.
//
#pragma once

#include <gridformer/ops.hpp>

#include <cstdint>
#include <variant>
#include <vector>

namespace gridformer {

struct Sphere {
    Vec3 center;
    double radius;
};

struct Box {
    Vec3 center;
    Vec3 half_extents;
};

/// Ring around the z axis through center.
struct Torus {
    Vec3 center;
    double major_radius;
    double minor_radius;
};

using Primitive = std::variant<Sphere, Box, Torus>;

inline constexpr double kShapePadding = 0.05;

/// A primitive or a union of primitives. Nested unions are flattened.
/// Construction checks that every surface lies inside
/// [kShapePadding, 1 - kShapePadding]^3.
class ShapeSpec {
public:
    static ShapeSpec sphere(const Vec3& center, double radius);
    static ShapeSpec box(const Vec3& center, const Vec3& half_extents);
    static ShapeSpec torus(const Vec3& center, double major_radius, double minor_radius);
    static ShapeSpec unite(const std::vector<ShapeSpec>& members);

    const std::vector<Primitive>& primitives() const { return primitives_; }
    bool is_union() const { return primitives_.size() > 1; }

    /// Negative inside, zero on the surface.
    double signed_distance(const Vec3& q) const;

private:
    explicit ShapeSpec(std::vector<Primitive> primitives);
    std::vector<Primitive> primitives_;
};

double signed_distance(const Primitive& p, const Vec3& q);
double surface_area(const Primitive& p);
Vec3 outward_normal(const Primitive& p, const Vec3& on_surface);

/// 1 iff q is inside or on the surface. Throws DomainError outside [0,1]^3.
std::uint8_t analytic_occupancy(const ShapeSpec& spec, const Vec3& q);

struct SurfaceSamples {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
};

class Rng;

/// Noise-free samples uniform by area over the visible surface of the shape,
/// with analytic unit normals.
SurfaceSamples sample_surface_exact(const ShapeSpec& spec, std::size_t n, Rng& rng);

} // namespace gridformer
