// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <gridformer/tensor.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace gridformer {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::uint64_t step = 0;

    /// Zero moments shaped like `params`.
    static OptimizerState for_parameters(std::span<const Tensor> params);
};

/// One bias-corrected Adam update using the gradients stored on `params`.
/// Throws NumericError (leaving params and state untouched) when any
/// gradient entry is non-finite.
void adam_step(std::span<Tensor> params, OptimizerState& state, double lr, const AdamConfig& cfg = {});

/// Rescales all gradients so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
double clip_gradient_norm(std::span<Tensor> params, double max_norm);

} // namespace gridformer
