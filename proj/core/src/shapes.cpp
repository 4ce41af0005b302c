// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/error.hpp>
#include <gridformer/rng.hpp>
#include <gridformer/shapes.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gridformer {

namespace {

struct Bounds {
    Vec3 lo;
    Vec3 hi;
};

Bounds
bounds(const Primitive& p) {
    return std::visit(
        [](const auto& s) -> Bounds {
            using T = std::decay_t<decltype(s)>;
            Vec3 ext;
            if constexpr (std::is_same_v<T, Sphere>) {
                ext = {s.radius, s.radius, s.radius};
            } else if constexpr (std::is_same_v<T, Box>) {
                ext = s.half_extents;
            } else {
                const double r = s.major_radius + s.minor_radius;
                ext = {r, r, s.minor_radius};
            }
            Bounds b;
            for (int a = 0; a < 3; ++a) {
                b.lo[a] = s.center[a] - ext[a];
                b.hi[a] = s.center[a] + ext[a];
            }
            return b;
        },
        p);
}

void
validate(const Primitive& p) {
    std::visit(
        [](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Sphere>) {
                if (!(s.radius > 0.0)) {
                    throw DomainError(fmt::format("sphere radius {} must be positive", s.radius));
                }
            } else if constexpr (std::is_same_v<T, Box>) {
                for (double h : s.half_extents) {
                    if (!(h > 0.0)) {
                        throw DomainError(fmt::format("box half extent {} must be positive", h));
                    }
                }
            } else {
                if (!(s.minor_radius > 0.0 && s.major_radius > s.minor_radius)) {
                    throw DomainError(fmt::format("torus radii ({}, {}) need 0 < minor < major",
                                                  s.major_radius, s.minor_radius));
                }
            }
        },
        p);
    const Bounds b = bounds(p);
    for (int a = 0; a < 3; ++a) {
        if (b.lo[a] < kShapePadding - 1e-12 || b.hi[a] > 1.0 - kShapePadding + 1e-12) {
            throw DomainError(fmt::format("shape extends to [{}, {}] on axis {}, outside [{}, {}]",
                                          b.lo[a], b.hi[a], a, kShapePadding, 1.0 - kShapePadding));
        }
    }
}

double
norm(const Vec3& v) {
    return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

} // namespace

ShapeSpec::ShapeSpec(std::vector<Primitive> primitives) : primitives_(std::move(primitives)) {
    if (primitives_.empty()) {
        throw ContractError("a shape needs at least one primitive");
    }
    for (const auto& p : primitives_) {
        validate(p);
    }
}

ShapeSpec
ShapeSpec::sphere(const Vec3& center, double radius) {
    return ShapeSpec({Sphere{center, radius}});
}

ShapeSpec
ShapeSpec::box(const Vec3& center, const Vec3& half_extents) {
    return ShapeSpec({Box{center, half_extents}});
}

ShapeSpec
ShapeSpec::torus(const Vec3& center, double major_radius, double minor_radius) {
    return ShapeSpec({Torus{center, major_radius, minor_radius}});
}

ShapeSpec
ShapeSpec::unite(const std::vector<ShapeSpec>& members) {
    std::vector<Primitive> all;
    for (const auto& m : members) {
        all.insert(all.end(), m.primitives_.begin(), m.primitives_.end());
    }
    return ShapeSpec(std::move(all));
}

double
signed_distance(const Primitive& p, const Vec3& q) {
    return std::visit(
        [&q](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            const Vec3 d{q[0] - s.center[0], q[1] - s.center[1], q[2] - s.center[2]};
            if constexpr (std::is_same_v<T, Sphere>) {
                return norm(d) - s.radius;
            } else if constexpr (std::is_same_v<T, Box>) {
                Vec3 e;
                double outside = 0.0;
                double inside = -INFINITY;
                for (int a = 0; a < 3; ++a) {
                    e[a] = std::abs(d[a]) - s.half_extents[a];
                    outside += std::max(e[a], 0.0) * std::max(e[a], 0.0);
                    inside = std::max(inside, e[a]);
                }
                return std::sqrt(outside) + std::min(inside, 0.0);
            } else {
                const double ring = std::hypot(d[0], d[1]) - s.major_radius;
                return std::hypot(ring, d[2]) - s.minor_radius;
            }
        },
        p);
}

double
ShapeSpec::signed_distance(const Vec3& q) const {
    double best = INFINITY;
    for (const auto& p : primitives_) {
        best = std::min(best, gridformer::signed_distance(p, q));
    }
    return best;
}

double
surface_area(const Primitive& p) {
    return std::visit(
        [](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Sphere>) {
                return 4.0 * std::numbers::pi * s.radius * s.radius;
            } else if constexpr (std::is_same_v<T, Box>) {
                const auto& h = s.half_extents;
                return 8.0 * (h[1] * h[2] + h[0] * h[2] + h[0] * h[1]);
            } else {
                return 4.0 * std::numbers::pi * std::numbers::pi * s.major_radius * s.minor_radius;
            }
        },
        p);
}

Vec3
outward_normal(const Primitive& p, const Vec3& x) {
    return std::visit(
        [&x](const auto& s) -> Vec3 {
            using T = std::decay_t<decltype(s)>;
            const Vec3 d{x[0] - s.center[0], x[1] - s.center[1], x[2] - s.center[2]};
            if constexpr (std::is_same_v<T, Sphere>) {
                const double n = norm(d);
                return {d[0] / n, d[1] / n, d[2] / n};
            } else if constexpr (std::is_same_v<T, Box>) {
                int axis = 0;
                double best = -INFINITY;
                for (int a = 0; a < 3; ++a) {
                    const double e = std::abs(d[a]) - s.half_extents[a];
                    if (e > best) {
                        best = e;
                        axis = a;
                    }
                }
                Vec3 n{0.0, 0.0, 0.0};
                n[axis] = d[axis] >= 0.0 ? 1.0 : -1.0;
                return n;
            } else {
                const double rho = std::hypot(d[0], d[1]);
                const Vec3 ring{d[0] / rho * s.major_radius, d[1] / rho * s.major_radius, 0.0};
                const Vec3 v{d[0] - ring[0], d[1] - ring[1], d[2]};
                const double n = norm(v);
                return {v[0] / n, v[1] / n, v[2] / n};
            }
        },
        p);
}

std::uint8_t
analytic_occupancy(const ShapeSpec& spec, const Vec3& q) {
    for (double v : q) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw DomainError(fmt::format("query ({}, {}, {}) outside the unit cube", q[0], q[1], q[2]));
        }
    }
    return spec.signed_distance(q) <= 0.0 ? 1 : 0;
}

namespace {

struct OrientedPoint {
    Vec3 point;
    Vec3 normal;
};

OrientedPoint
sample_primitive(const Primitive& p, Rng& rng) {
    return std::visit(
        [&rng](const auto& s) -> OrientedPoint {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Sphere>) {
                Vec3 n;
                double len = 0.0;
                do {
                    n = {rng.normal(), rng.normal(), rng.normal()};
                    len = norm(n);
                } while (len < 1e-12);
                for (auto& v : n) {
                    v /= len;
                }
                return {{s.center[0] + s.radius * n[0], s.center[1] + s.radius * n[1],
                         s.center[2] + s.radius * n[2]},
                        n};
            } else if constexpr (std::is_same_v<T, Box>) {
                const auto& h = s.half_extents;
                // Face pairs normal to x, y, z weighted by area.
                const double areas[3] = {h[1] * h[2], h[0] * h[2], h[0] * h[1]};
                const double pick = rng.uniform() * (areas[0] + areas[1] + areas[2]);
                const int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
                const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
                Vec3 pt;
                Vec3 n{0.0, 0.0, 0.0};
                for (int a = 0; a < 3; ++a) {
                    pt[a] = a == axis ? s.center[a] + side * h[a]
                                      : s.center[a] + rng.uniform(-h[a], h[a]);
                }
                n[axis] = side;
                return {pt, n};
            } else {
                const double big = s.major_radius;
                const double small = s.minor_radius;
                double u, v;
                // Area element is proportional to (R + r cos v).
                do {
                    u = rng.uniform(0.0, 2.0 * std::numbers::pi);
                    v = rng.uniform(0.0, 2.0 * std::numbers::pi);
                } while (rng.uniform() * (big + small) > big + small * std::cos(v));
                const Vec3 n{std::cos(v) * std::cos(u), std::cos(v) * std::sin(u), std::sin(v)};
                const double rho = big + small * std::cos(v);
                return {{s.center[0] + rho * std::cos(u), s.center[1] + rho * std::sin(u),
                         s.center[2] + small * std::sin(v)},
                        n};
            }
        },
        p);
}

} // namespace

SurfaceSamples
sample_surface_exact(const ShapeSpec& spec, std::size_t n, Rng& rng) {
    const auto& prims = spec.primitives();
    std::vector<double> cumulative;
    double total = 0.0;
    for (const auto& p : prims) {
        total += surface_area(p);
        cumulative.push_back(total);
    }
    SurfaceSamples out;
    out.points.reserve(n);
    out.normals.reserve(n);
    while (out.points.size() < n) {
        const double pick = rng.uniform() * total;
        const auto which = static_cast<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
        const std::size_t idx = std::min(which, prims.size() - 1);
        const OrientedPoint op = sample_primitive(prims[idx], rng);
        bool hidden = false;
        for (std::size_t k = 0; k < prims.size() && !hidden; ++k) {
            hidden = k != idx && signed_distance(prims[k], op.point) < 0.0;
        }
        if (hidden) {
            continue;
        }
        out.points.push_back(op.point);
        out.normals.push_back(op.normal);
    }
    return out;
}

} // namespace gridformer
