// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/error.hpp>
#include <gridformer/mesh.hpp>

#include <fmt/format.h>

#include <cmath>
#include <cstdint>
#include <unordered_map>

namespace gridformer {

namespace {

#include "mc_tables.inc"

constexpr std::array<std::array<int, 3>, 8> kCorner = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};

constexpr std::array<std::array<int, 2>, 12> kEdge = {{
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

// Interpolation parameters this close to an endpoint snap onto the sample.
constexpr double kSnap = 1e-12;

Vec3
cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3
minus(const Vec3& a, const Vec3& b) {
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

Vec3
face_normal(const Mesh& m, const std::array<std::uint32_t, 3>& t) {
    const auto& a = m.vertices[t[0]];
    return cross(minus(m.vertices[t[1]], a), minus(m.vertices[t[2]], a));
}

class VertexWelder {
public:
    VertexWelder(const ScalarGrid& grid, double tau) : grid_(grid), tau_(tau) {}

    std::uint32_t edge_vertex(std::size_t a, std::size_t b, const Vec3& pa, const Vec3& pb) {
        if (a > b) {
            return edge_vertex(b, a, pb, pa);
        }
        const double va = grid_.values[a];
        const double vb = grid_.values[b];
        const double t = (tau_ - va) / (vb - va);
        if (t <= kSnap) {
            return lookup(a * 4 + 3, pa);
        }
        if (t >= 1.0 - kSnap) {
            return lookup(b * 4 + 3, pb);
        }
        // Axis of the edge distinguishes the three edges leaving sample a.
        std::uint64_t axis = 0;
        while (pa[axis] == pb[axis]) {
            ++axis;
        }
        return lookup(a * 4 + axis, {pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]),
                                     pa[2] + t * (pb[2] - pa[2])});
    }

    std::vector<Vec3> take() { return std::move(vertices_); }

private:
    std::uint32_t lookup(std::uint64_t key, const Vec3& p) {
        const auto [it, inserted] = index_.try_emplace(key, static_cast<std::uint32_t>(vertices_.size()));
        if (inserted) {
            vertices_.push_back(p);
        }
        return it->second;
    }

    const ScalarGrid& grid_;
    double tau_;
    std::unordered_map<std::uint64_t, std::uint32_t> index_;
    std::vector<Vec3> vertices_;
};

} // namespace

ScalarGrid::ScalarGrid(int res) : resolution(res) {
    if (res < 1) {
        throw ContractError(fmt::format("scalar grid resolution {} must be positive", res));
    }
    const auto n = points_per_axis();
    values.assign(n * n * n, 0.0);
}

Vec3
ScalarGrid::coord(std::size_t i, std::size_t j, std::size_t k) const {
    const double r = resolution;
    return {static_cast<double>(i) / r, static_cast<double>(j) / r, static_cast<double>(k) / r};
}

void
compute_vertex_normals(Mesh& mesh) {
    mesh.normals.assign(mesh.vertices.size(), Vec3{0.0, 0.0, 0.0});
    std::vector<Vec3> fallback(mesh.vertices.size(), Vec3{0.0, 0.0, 0.0});
    for (const auto& t : mesh.triangles) {
        const Vec3 n = face_normal(mesh, t);
        for (const auto v : t) {
            for (int a = 0; a < 3; ++a) {
                mesh.normals[v][a] += n[a];
            }
            if (fallback[v] == Vec3{0.0, 0.0, 0.0}) {
                fallback[v] = n;
            }
        }
    }
    for (std::size_t v = 0; v < mesh.normals.size(); ++v) {
        auto& n = mesh.normals[v];
        double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
        if (len == 0.0) {
            n = fallback[v];
            len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
        }
        if (len == 0.0) {
            n = {0.0, 0.0, 1.0};
            continue;
        }
        for (auto& c : n) {
            c /= len;
        }
    }
}

Mesh
marching_cubes(const ScalarGrid& grid, double tau) {
    const auto n = grid.points_per_axis();
    if (grid.values.size() != n * n * n) {
        throw DimensionError(fmt::format("scalar grid of resolution {} holds {} values, expected {}",
                                         grid.resolution, grid.values.size(), n * n * n));
    }
    const auto res = static_cast<std::size_t>(grid.resolution);
    VertexWelder welder(grid, tau);
    std::vector<std::array<std::uint32_t, 3>> triangles;
    std::array<std::size_t, 8> sample{};
    std::array<Vec3, 8> position{};
    for (std::size_t i = 0; i < res; ++i) {
        for (std::size_t j = 0; j < res; ++j) {
            for (std::size_t k = 0; k < res; ++k) {
                unsigned cube = 0;
                for (int c = 0; c < 8; ++c) {
                    sample[c] = grid.index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
                    if (grid.values[sample[c]] < tau) {
                        cube |= 1U << c;
                    }
                }
                if (cube == 0 || cube == 255) {
                    continue;
                }
                for (int c = 0; c < 8; ++c) {
                    position[c] = grid.coord(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
                }
                std::array<std::uint32_t, 12> edge_vertex{};
                std::uint16_t done = 0;
                const auto* row = kTriangleTable[cube];
                for (int e = 0; row[e] >= 0; e += 3) {
                    std::array<std::uint32_t, 3> tri{};
                    for (int v = 0; v < 3; ++v) {
                        const int edge = row[e + v];
                        if (!(done & (1U << edge))) {
                            const int ca = kEdge[edge][0];
                            const int cb = kEdge[edge][1];
                            edge_vertex[edge] =
                                welder.edge_vertex(sample[ca], sample[cb], position[ca], position[cb]);
                            done |= static_cast<std::uint16_t>(1U << edge);
                        }
                        tri[v] = edge_vertex[edge];
                    }
                    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[2] == tri[0]) {
                        continue;
                    }
                    triangles.push_back(tri);
                }
            }
        }
    }

    // Drop zero-area faces and the vertices left unreferenced.
    Mesh mesh;
    std::vector<Vec3> vertices = welder.take();
    mesh.vertices = vertices;
    std::vector<std::int64_t> remap(vertices.size(), -1);
    Mesh out;
    for (const auto& t : triangles) {
        const Vec3 nrm = face_normal(mesh, t);
        if (nrm[0] == 0.0 && nrm[1] == 0.0 && nrm[2] == 0.0) {
            continue;
        }
        std::array<std::uint32_t, 3> mapped{};
        for (int v = 0; v < 3; ++v) {
            auto& slot = remap[t[v]];
            if (slot < 0) {
                slot = static_cast<std::int64_t>(out.vertices.size());
                out.vertices.push_back(vertices[t[v]]);
            }
            mapped[v] = static_cast<std::uint32_t>(slot);
        }
        out.triangles.push_back(mapped);
    }
    compute_vertex_normals(out);
    return out;
}

} // namespace gridformer
