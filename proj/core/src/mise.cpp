// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/error.hpp>
#include <gridformer/mesh.hpp>

#include <fmt/format.h>

#include <algorithm>

namespace gridformer {

namespace {

enum class SampleState : std::uint8_t { Unknown, Filled, Evaluated };

void
evaluate_into(const FieldFunction& field, ScalarGrid& grid, std::vector<SampleState>& state,
              std::vector<std::size_t>& pending, std::size_t& evaluations) {
    if (pending.empty()) {
        return;
    }
    std::sort(pending.begin(), pending.end());
    pending.erase(std::unique(pending.begin(), pending.end()), pending.end());
    const auto n = grid.points_per_axis();
    std::vector<Vec3> coords;
    coords.reserve(pending.size());
    for (const auto idx : pending) {
        coords.push_back(grid.coord(idx / (n * n), (idx / n) % n, idx % n));
    }
    const auto values = field(coords);
    if (values.size() != coords.size()) {
        throw ContractError(fmt::format("field returned {} values for {} samples", values.size(), coords.size()));
    }
    for (std::size_t p = 0; p < pending.size(); ++p) {
        grid.values[pending[p]] = values[p];
        state[pending[p]] = SampleState::Evaluated;
    }
    evaluations += pending.size();
    pending.clear();
}

} // namespace

ScalarGrid
sample_dense(const FieldFunction& field, int resolution) {
    ScalarGrid grid(resolution);
    const auto n = grid.points_per_axis();
    std::vector<Vec3> coords;
    coords.reserve(n * n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < n; ++k) {
                coords.push_back(grid.coord(i, j, k));
            }
        }
    }
    grid.values = field(coords);
    if (grid.values.size() != coords.size()) {
        throw ContractError(fmt::format("field returned {} values for {} samples", grid.values.size(),
                                        coords.size()));
    }
    return grid;
}

MiseResult
dense_extract(const FieldFunction& field, int resolution, double tau) {
    MiseResult r;
    r.grid = sample_dense(field, resolution);
    r.evaluations = r.grid.values.size();
    r.mesh = marching_cubes(r.grid, tau);
    return r;
}

MiseResult
mise_extract(const FieldFunction& field, const MiseOptions& options) {
    if (options.initial_resolution < 2) {
        throw ContractError(fmt::format("initial resolution {} must be at least 2", options.initial_resolution));
    }
    if (options.steps < 0 || options.steps > 8) {
        throw ContractError(fmt::format("refinement steps {} outside [0, 8]", options.steps));
    }
    const std::size_t final_res = static_cast<std::size_t>(options.initial_resolution) << options.steps;
    MiseResult result;
    result.grid = ScalarGrid(static_cast<int>(final_res));
    ScalarGrid& grid = result.grid;
    const auto n = grid.points_per_axis();
    std::vector<SampleState> state(grid.values.size(), SampleState::Unknown);
    std::vector<std::size_t> pending;

    std::size_t stride = std::size_t{1} << options.steps;
    for (std::size_t i = 0; i < n; i += stride) {
        for (std::size_t j = 0; j < n; j += stride) {
            for (std::size_t k = 0; k < n; k += stride) {
                pending.push_back(grid.index(i, j, k));
            }
        }
    }
    evaluate_into(field, grid, state, pending, result.evaluations);

    for (int level = 0; level < options.steps; ++level, stride /= 2) {
        const std::size_t cells = (n - 1) / stride;
        const auto cell_id = [cells](std::size_t a, std::size_t b, std::size_t c) { return (a * cells + b) * cells + c; };

        std::vector<std::uint8_t> straddles(cells * cells * cells, 0);
        for (std::size_t a = 0; a < cells; ++a) {
            for (std::size_t b = 0; b < cells; ++b) {
                for (std::size_t c = 0; c < cells; ++c) {
                    bool below = false;
                    bool above = false;
                    for (int corner = 0; corner < 8; ++corner) {
                        const double v = grid.values[grid.index((a + (corner & 1)) * stride,
                                                                (b + ((corner >> 1) & 1)) * stride,
                                                                (c + ((corner >> 2) & 1)) * stride)];
                        (v < options.tau ? below : above) = true;
                    }
                    straddles[cell_id(a, b, c)] = below && above;
                }
            }
        }
        // Grow by one ring so surface pieces that miss every coarse corner
        // next to a crossing are still refined.
        std::vector<std::uint8_t> active(straddles.size(), 0);
        for (std::size_t a = 0; a < cells; ++a) {
            for (std::size_t b = 0; b < cells; ++b) {
                for (std::size_t c = 0; c < cells; ++c) {
                    if (!straddles[cell_id(a, b, c)]) {
                        continue;
                    }
                    for (std::size_t x = a ? a - 1 : a; x <= std::min(a + 1, cells - 1); ++x) {
                        for (std::size_t y = b ? b - 1 : b; y <= std::min(b + 1, cells - 1); ++y) {
                            for (std::size_t z = c ? c - 1 : c; z <= std::min(c + 1, cells - 1); ++z) {
                                active[cell_id(x, y, z)] = 1;
                            }
                        }
                    }
                }
            }
        }

        const std::size_t half = stride / 2;
        for (std::size_t a = 0; a < cells; ++a) {
            for (std::size_t b = 0; b < cells; ++b) {
                for (std::size_t c = 0; c < cells; ++c) {
                    if (!active[cell_id(a, b, c)]) {
                        continue;
                    }
                    for (std::size_t x = a * stride; x <= (a + 1) * stride; x += half) {
                        for (std::size_t y = b * stride; y <= (b + 1) * stride; y += half) {
                            for (std::size_t z = c * stride; z <= (c + 1) * stride; z += half) {
                                const auto idx = grid.index(x, y, z);
                                if (state[idx] != SampleState::Evaluated) {
                                    pending.push_back(idx);
                                }
                            }
                        }
                    }
                }
            }
        }
        evaluate_into(field, grid, state, pending, result.evaluations);

        // Samples of inactive cells inherit the value of the cell's origin.
        for (std::size_t a = 0; a < cells; ++a) {
            for (std::size_t b = 0; b < cells; ++b) {
                for (std::size_t c = 0; c < cells; ++c) {
                    if (active[cell_id(a, b, c)]) {
                        continue;
                    }
                    const double fill = grid.values[grid.index(a * stride, b * stride, c * stride)];
                    for (std::size_t x = a * stride; x <= (a + 1) * stride; x += half) {
                        for (std::size_t y = b * stride; y <= (b + 1) * stride; y += half) {
                            for (std::size_t z = c * stride; z <= (c + 1) * stride; z += half) {
                                const auto idx = grid.index(x, y, z);
                                if (state[idx] == SampleState::Unknown) {
                                    grid.values[idx] = fill;
                                    state[idx] = SampleState::Filled;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    result.mesh = marching_cubes(grid, options.tau);
    return result;
}

} // namespace gridformer
