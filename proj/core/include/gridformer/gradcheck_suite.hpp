// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
// The gradient suite behind the `gradcheck` command: every primitive on
// randomized small shapes, then the full training losses of a tiny model.
//
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace gridformer {

inline constexpr double kPrimitiveTolerance = 1e-6;
inline constexpr double kModelTolerance = 1e-3;

struct GradcheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    std::size_t coordinates = 0;
    /// Where the worst error occurred.
    std::string worst_input;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;

    bool passed() const { return max_rel_err < tolerance; }
};

/// Worst error per primitive over `trials` randomized instances. Most
/// primitives are at most quadratic in any single input, so a coarse step
/// keeps the central difference exact while limiting roundoff.
std::vector<GradcheckEntry> primitive_gradchecks(std::size_t trials, std::uint64_t seed, double step = 1e-4);

/// Stage-1 and stage-2 losses of a 5-point cloud on a 4^3 base grid with
/// respect to every parameter.
std::vector<GradcheckEntry> model_gradchecks(std::uint64_t seed, double step = 1e-4);

} // namespace gridformer
