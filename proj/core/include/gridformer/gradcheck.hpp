// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <gridformer/tensor.hpp>

#include <cstddef>
#include <functional>
#include <span>
#include <string>

namespace gridformer {

struct GradcheckResult {
    double max_rel_err = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates_checked = 0;
};

struct GradcheckOptions {
    double step = 1e-6;
    /// Denominator floor of the relative error.
    double floor = 1e-8;
    /// When non-zero, only this many coordinates per input are probed,
    /// chosen with a fixed stride so the selection is deterministic.
    std::size_t max_coords_per_input = 0;
};

/// Compares the tape gradient of a scalar function against central
/// differences (f(x+h) - f(x-h)) / 2h, coordinate by coordinate.
/// fn must build its result from the given inputs using tensorcore
/// primitives; the inputs must require a gradient.
GradcheckResult gradcheck(const std::function<Tensor(Tape&)>& fn, std::span<Tensor> inputs,
                          const GradcheckOptions& options = {});

} // namespace gridformer
