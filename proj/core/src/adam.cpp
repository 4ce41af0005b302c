// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/adam.hpp>
#include <gridformer/error.hpp>

#include <fmt/format.h>

#include <cmath>

namespace gridformer {

OptimizerState
OptimizerState::for_parameters(std::span<const Tensor> params) {
    OptimizerState s;
    for (const auto& p : params) {
        s.first_moment.emplace_back(p.numel(), 0.0);
        s.second_moment.emplace_back(p.numel(), 0.0);
    }
    return s;
}

void
adam_step(std::span<Tensor> params, OptimizerState& state, double lr, const AdamConfig& cfg) {
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
        throw DimensionError(fmt::format("optimizer state holds {} tensors, {} parameters given",
                                         state.first_moment.size(), params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.first_moment[i].size() != params[i].numel() ||
            state.second_moment[i].size() != params[i].numel()) {
            throw DimensionError(fmt::format("optimizer moments for parameter {} do not match shape {}", i,
                                             shape_string(params[i].shape())));
        }
        for (std::size_t k = 0; k < params[i].numel(); ++k) {
            if (!std::isfinite(params[i].grad()[k])) {
                throw NumericError(fmt::format("non-finite gradient in parameter {} at element {} (step {})", i,
                                               k, state.step + 1));
            }
        }
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto values = params[i].values();
        const auto grad = params[i].grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double g = grad[k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[k] / correction1;
            const double v_hat = v[k] / correction2;
            values[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

double
clip_gradient_norm(std::span<Tensor> params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (const double g : p.grad()) {
            sq += g * g;
        }
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (auto& p : params) {
            for (auto& g : p.grad()) {
                g *= scale;
            }
        }
    }
    return norm;
}

} // namespace gridformer
