// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <gridformer/error.hpp>
#include <gridformer/tensor.hpp>

#include <fmt/format.h>

#include <initializer_list>

namespace gridformer::detail {

inline bool
tracks(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape.recording()) {
        return false;
    }
    for (const auto* t : inputs) {
        if (t->requires_grad()) {
            return true;
        }
    }
    return false;
}

inline void
require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(fmt::format("{} must have rank {}, got shape {}", what, rank,
                                         shape_string(t.shape())));
    }
}

} // namespace gridformer::detail
