// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
// The differentiable primitives the model is assembled from. Every op takes
// the tape it records onto; outputs require a gradient only when the tape is
// recording and at least one input requires one. All reductions accumulate in
// ascending row (point) order.
//
#pragma once

#include <gridformer/tensor.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace gridformer {

using Vec3 = std::array<double, 3>;

/// Dense cubic feature lattice. features has shape [resolution^3 x C];
/// cell (i, j, k) lives in row (i * resolution + j) * resolution + k and its
/// feature is located at the cell center ((i + 0.5) / resolution, ...).
struct FeatureGrid {
    int resolution = 0;
    Tensor features;
    /// Optional per-cell flags: rows left unflagged are zero whatever the
    /// parameters are, so backward passes may skip them. Null means every
    /// row may be non-zero.
    std::shared_ptr<const std::vector<std::uint8_t>> support;

    std::size_t num_cells() const {
        const auto r = static_cast<std::size_t>(resolution);
        return r * r * r;
    }
    std::size_t channels() const { return features.extent(1); }
};

inline std::size_t
cell_index(int i, int j, int k, int resolution) {
    return (static_cast<std::size_t>(i) * resolution + j) * resolution + k;
}

/// Flattened index of the cell containing p, with coordinate 1.0 folded into
/// the last cell. Throws DomainError outside [0,1]^3.
std::size_t locate_cell(const Vec3& p, int resolution);

enum class Pointwise { Relu, Sigmoid };
enum class ReduceMode { Mean, Sum };
enum class ConvMode { Full, Depthwise };
enum class ResampleFactor { Down2, Up2 };

/// Trilinear stencil of a point against the cell-center lattice.
struct InterpolationStencil {
    std::array<std::size_t, 8> cells{};
    std::array<double, 8> weights{};
};

InterpolationStencil interpolation_stencil(const Vec3& p, int resolution);

namespace ops {

/// y = x W + b with x [N x Cin], W [Cin x Cout], b [Cout].
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor pointwise(Tape& tape, const Tensor& x, Pointwise kind);
inline Tensor relu(Tape& tape, const Tensor& x) { return pointwise(tape, x, Pointwise::Relu); }
inline Tensor sigmoid(Tape& tape, const Tensor& x) { return pointwise(tape, x, Pointwise::Sigmoid); }

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

/// out[n] = x[rows[n]]
Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> rows);

/// Repeats a single column C times: [N x 1] -> [N x C].
Tensor broadcast_cols(Tape& tape, const Tensor& x, std::size_t columns);

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);

/// Per channel, softmax over all rows that share a group id.
Tensor group_softmax(Tape& tape, const Tensor& logits, std::span<const std::size_t> group_id);

/// Reduces rows into cells; cells without members are zero.
Tensor scatter_reduce(Tape& tape, const Tensor& values, std::span<const std::size_t> cell_id,
                      std::size_t num_cells, ReduceMode mode);

/// Trilinear sampling of cell-center features at points in [0,1]^3. The
/// weights are fixed by geometry; gradients flow into the grid only.
Tensor grid_interpolate(Tape& tape, const FeatureGrid& grid, std::span<const Vec3> points);

/// 3x3x3 convolution with zero padding. Full kernels are [27 x Cin x Cout],
/// depthwise kernels [27 x C]. Tap t = (dx+1)*9 + (dy+1)*3 + (dz+1) reads the
/// input at cell (i+dx, j+dy, k+dz). The output support is the input support
/// grown by one cell.
FeatureGrid conv3(Tape& tape, const FeatureGrid& grid, const Tensor& kernel, ConvMode mode);

/// Same as conv3 but only evaluates the listed output cells; returns
/// [cells.size() x Cout].
Tensor conv3_at(Tape& tape, const FeatureGrid& grid, const Tensor& kernel, ConvMode mode,
                std::span<const std::size_t> cells);

/// Down2 is 2x2x2 average pooling, Up2 nearest-neighbour repetition.
FeatureGrid resample_grid(Tape& tape, const FeatureGrid& grid, ResampleFactor factor);

Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

/// logit - m * (2 l - 1), elementwise over an [M] or [M x 1] tensor.
Tensor margin_shift(Tape& tape, const Tensor& logits, std::span<const std::uint8_t> labels,
                    double margin);

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
Tensor bce(Tape& tape, const Tensor& probabilities, std::span<const std::uint8_t> labels);

inline constexpr double kProbabilityClamp = 1e-7;

} // namespace ops

} // namespace gridformer
