// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/error.hpp>
#include <gridformer/fields.hpp>
#include <gridformer/rng.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace gridformer {

std::vector<Vec3>
sample_surface(const ShapeSpec& spec, std::size_t n, double sigma, std::uint64_t seed) {
    if (n == 0) {
        throw ContractError("sample_surface needs n >= 1");
    }
    if (!(sigma >= 0.0)) {
        throw ContractError(fmt::format("noise stddev {} must be non-negative", sigma));
    }
    Rng surface_rng(seed, "surface");
    Rng noise_rng(seed, "surface-noise");
    auto samples = sample_surface_exact(spec, n, surface_rng);
    if (sigma > 0.0) {
        for (auto& p : samples.points) {
            for (auto& v : p) {
                v = std::clamp(v + sigma * noise_rng.normal(), 0.0, 1.0);
            }
        }
    }
    return std::move(samples.points);
}

QuerySet
sample_queries(const ShapeSpec& spec, std::size_t m, std::uint64_t seed) {
    if (m == 0) {
        throw ContractError("sample_queries needs m >= 1");
    }
    Rng rng(seed, "queries");
    QuerySet qs;
    qs.coords.resize(m);
    qs.label.resize(m);
    qs.boundary_mask.assign(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
        for (auto& v : qs.coords[i]) {
            v = rng.uniform();
        }
        qs.label[i] = analytic_occupancy(spec, qs.coords[i]);
    }
    return qs;
}

BoundaryResult
extract_boundary(const QuerySet& queries, double boundary_radius) {
    if (!(boundary_radius > 0.0)) {
        throw ContractError(fmt::format("boundary radius {} must be positive", boundary_radius));
    }
    const auto m = queries.size();
    if (queries.label.size() != m) {
        throw DimensionError(fmt::format("{} labels for {} queries", queries.label.size(), m));
    }
    // A cell a hair wider than the radius keeps every neighbour within one cell.
    const double cell = boundary_radius * (1.0 + 1e-9);
    using Key = std::array<long, 3>;
    auto key_of = [cell](const Vec3& p) {
        return Key{static_cast<long>(std::floor(p[0] / cell)), static_cast<long>(std::floor(p[1] / cell)),
                   static_cast<long>(std::floor(p[2] / cell))};
    };
    std::vector<Key> keys(m);
    for (std::size_t i = 0; i < m; ++i) {
        keys[i] = key_of(queries.coords[i]);
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&keys](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
    std::vector<Key> sorted_keys(m);
    for (std::size_t i = 0; i < m; ++i) {
        sorted_keys[i] = keys[order[i]];
    }

    BoundaryResult result;
    result.queries = queries;
    result.queries.boundary_mask.assign(m, 0);
    const double r2 = boundary_radius * boundary_radius;
    for (std::size_t i = 0; i < m; ++i) {
        const Vec3& p = queries.coords[i];
        bool found = false;
        for (long dx = -1; dx <= 1 && !found; ++dx) {
            for (long dy = -1; dy <= 1 && !found; ++dy) {
                for (long dz = -1; dz <= 1 && !found; ++dz) {
                    const Key k{keys[i][0] + dx, keys[i][1] + dy, keys[i][2] + dz};
                    auto [lo, hi] = std::equal_range(sorted_keys.begin(), sorted_keys.end(), k);
                    for (auto it = lo; it != hi; ++it) {
                        const std::size_t j = order[static_cast<std::size_t>(it - sorted_keys.begin())];
                        if (queries.label[j] == queries.label[i]) {
                            continue;
                        }
                        const Vec3& q = queries.coords[j];
                        const double d0 = p[0] - q[0];
                        const double d1 = p[1] - q[1];
                        const double d2 = p[2] - q[2];
                        if (d0 * d0 + d1 * d1 + d2 * d2 <= r2) {
                            found = true;
                            break;
                        }
                    }
                }
            }
        }
        if (found) {
            result.queries.boundary_mask[i] = 1;
            ++result.boundary_count;
        }
    }
    result.no_opposite_pairs = result.boundary_count == 0;
    return result;
}

namespace {

Vec3
round_to_float(const Vec3& p) {
    return {static_cast<double>(static_cast<float>(p[0])), static_cast<double>(static_cast<float>(p[1])),
            static_cast<double>(static_cast<float>(p[2]))};
}

} // namespace

Dataset
make_dataset(const ShapeSpec& spec, const DataParams& params) {
    Dataset ds;
    ds.points = sample_surface(spec, params.n_points, params.sigma, params.seed);
    for (auto& p : ds.points) {
        p = round_to_float(p);
    }
    QuerySet qs = sample_queries(spec, params.n_queries, params.seed);
    for (std::size_t i = 0; i < qs.size(); ++i) {
        qs.coords[i] = round_to_float(qs.coords[i]);
        qs.label[i] = analytic_occupancy(spec, qs.coords[i]);
    }
    ds.queries = extract_boundary(qs, params.boundary_radius).queries;
    return ds;
}

} // namespace gridformer
