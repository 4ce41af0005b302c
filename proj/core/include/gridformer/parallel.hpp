// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstddef>
#include <functional>

namespace gridformer {

/// Thread cap from GRIDFORMER_THREADS (default 1, invalid values read as 1).
std::size_t configured_threads();

/// Runs body(i) for i in [0, count). Each index is processed by exactly one
/// thread; callers write results into per-index slots so the combined
/// output does not depend on the thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

} // namespace gridformer
