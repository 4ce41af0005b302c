// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/error.hpp>
#include <gridformer/gradcheck.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace gridformer {

GradcheckResult
gradcheck(const std::function<Tensor(Tape&)>& fn, std::span<Tensor> inputs,
          const GradcheckOptions& options) {
    for (auto& t : inputs) {
        if (!t.requires_grad()) {
            throw ContractError("gradcheck inputs must require a gradient");
        }
        t.zero_grad();
    }

    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor out = fn(tape);
        if (out.numel() != 1) {
            throw ContractError(fmt::format("gradcheck needs a scalar function, got shape {}",
                                            shape_string(out.shape())));
        }
        tape.backward(out);
        for (auto& t : inputs) {
            auto g = t.grad();
            analytic.emplace_back(g.begin(), g.end());
        }
    }

    auto evaluate = [&fn]() {
        Tape tape(false);
        return fn(tape).item();
    };

    GradcheckResult result;
    const double h = options.step;
    for (std::size_t a = 0; a < inputs.size(); ++a) {
        auto values = inputs[a].values();
        const std::size_t n = values.size();
        std::size_t stride = 1;
        if (options.max_coords_per_input != 0 && n > options.max_coords_per_input) {
            stride = (n + options.max_coords_per_input - 1) / options.max_coords_per_input;
        }
        for (std::size_t i = 0; i < n; i += stride) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = evaluate();
            values[i] = saved - h;
            const double down = evaluate();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double exact = analytic[a][i];
            const double denom = std::max({std::abs(exact), std::abs(numeric), options.floor});
            const double err = std::abs(exact - numeric) / denom;
            ++result.coordinates_checked;
            if (!(err <= result.max_rel_err)) {
                result.max_rel_err = std::isnan(err) ? INFINITY : err;
                result.worst_input = a;
                result.worst_index = i;
                result.worst_analytic = exact;
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

} // namespace gridformer
