// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace gridformer {

/// Seeded random stream. The engine is std::mt19937_64 (fully specified by
/// the standard), seeded with splitmix64(seed ^ fnv1a64(stream)). Uniform
/// doubles take the top 53 bits; normals use the Box-Muller cosine branch;
/// integer draws use rejection so no modulo bias is introduced. None of the
/// implementation-defined std distributions are used.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view stream);

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal.
    double normal();
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace gridformer
