// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include "op_support.hpp"

#include <gridformer/ops.hpp>

#include <algorithm>
#include <cmath>

namespace gridformer::ops {

namespace {

void
check_labels(const Tensor& t, std::span<const std::uint8_t> labels, const char* op) {
    if (t.numel() != labels.size()) {
        throw DimensionError(fmt::format("{}: {} labels for {} predictions", op, labels.size(), t.numel()));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] > 1) {
            throw ContractError(fmt::format("{}: label {} at index {} is not 0 or 1", op, labels[i], i));
        }
    }
}

} // namespace

Tensor
margin_shift(Tape& tape, const Tensor& logits, std::span<const std::uint8_t> labels, double margin) {
    check_labels(logits, labels, "margin_shift");
    const bool grad = detail::tracks(tape, {&logits});
    Tensor y = Tensor::zeros(logits.shape(), grad);
    const auto xv = logits.values();
    auto yv = y.values();
    for (std::size_t i = 0; i < yv.size(); ++i) {
        yv[i] = xv[i] - margin * (labels[i] * 2.0 - 1.0);
    }
    if (grad) {
        tape.record("margin_shift", [logits, y]() mutable {
            const double s = testing::backward_scale("margin_shift");
            auto gx = logits.grad();
            const auto gy = std::as_const(y).grad();
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += s * gy[i];
            }
        });
    }
    return y;
}

Tensor
bce(Tape& tape, const Tensor& probabilities, std::span<const std::uint8_t> labels) {
    check_labels(probabilities, labels, "bce");
    const auto m = probabilities.numel();
    if (m == 0) {
        throw ContractError("bce over an empty batch");
    }
    const bool grad = detail::tracks(tape, {&probabilities});
    const auto pv = probabilities.values();
    constexpr double lo = kProbabilityClamp;
    constexpr double hi = 1.0 - kProbabilityClamp;
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double p = std::clamp(pv[i], lo, hi);
        acc += labels[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    Tensor y = Tensor::scalar(acc / static_cast<double>(m), grad);
    if (grad) {
        std::vector<std::uint8_t> lab(labels.begin(), labels.end());
        tape.record("bce", [probabilities, y, lab = std::move(lab), m]() mutable {
            const double g = testing::backward_scale("bce") * std::as_const(y).grad()[0] /
                             static_cast<double>(m);
            auto gp = probabilities.grad();
            const auto pv = probabilities.values();
            for (std::size_t i = 0; i < m; ++i) {
                const double p = pv[i];
                if (p < lo || p > hi) {
                    continue;
                }
                gp[i] += lab[i] ? -g / p : g / (1.0 - p);
            }
        });
    }
    return y;
}

} // namespace gridformer::ops
