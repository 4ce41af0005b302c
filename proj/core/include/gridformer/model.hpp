// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
// Point-grid transformer encoder (U-Net over volume grids) and the
// multi-resolution occupancy decoder.
//
#pragma once

#include <gridformer/ops.hpp>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gridformer {

enum class AttentionKind : std::uint8_t {
    /// One weight per channel, normalized per channel over the points of a cell.
    Vector = 0,
    /// One weight per point, shared by all channels.
    Scalar = 1,
};

enum class FeatureCombine : std::uint8_t { Sum = 0, Concat = 1 };

struct ModelConfig {
    int base_resolution = 32;
    int channels = 32;
    int unet_depth = 4;
    /// Number of trailing (decoder-side) layers using depthwise aggregation.
    int depthwise_last_k = 3;
    bool enable_downsampling = true;
    int decoder_hidden = 32;
    int decoder_blocks = 5;
    AttentionKind attention = AttentionKind::Vector;
    FeatureCombine combine = FeatureCombine::Sum;

    /// Throws ContractError when the configuration is unusable.
    void validate() const;
    int num_layers() const { return 2 * unet_depth - 1; }
    /// Grid resolution used by layer `layer` (0-based, encoder first).
    int layer_resolution(int layer) const;
    bool layer_is_depthwise(int layer) const { return layer >= num_layers() - depthwise_last_k; }

    bool operator==(const ModelConfig&) const = default;
};

struct LinearParams {
    Tensor weight; // [in x out]
    Tensor bias;   // [out]
};

/// Linear -> ReLU -> Linear.
struct MlpParams {
    LinearParams first;
    LinearParams second;
};

struct LayerParams {
    MlpParams position;   // offset of a point inside its cell -> C
    MlpParams query;      // point feature -> attention query
    MlpParams value;      // point feature -> value (shared with point update)
    MlpParams weighting;  // key - query + position -> attention logits
    Tensor key_kernel;    // 3^3 full convolution over grid features
    Tensor aggregate_kernel;
    bool depthwise = false;
};

struct ResidualBlockParams {
    LinearParams first;
    LinearParams second;
};

struct DecoderParams {
    std::vector<LinearParams> projections; // one per decoder grid
    LinearParams embed;                    // query coordinates -> hidden
    std::vector<LinearParams> conditioning;
    std::vector<ResidualBlockParams> blocks;
    LinearParams output;
};

struct ModelParams {
    ModelConfig config;
    MlpParams point_mlp;
    std::vector<LayerParams> layers;
    DecoderParams decoder;

    /// Builds freshly initialized parameters: fan-in scaled uniform weights
    /// drawn from the seeded stream, with the decoder output layer and the
    /// second layer of each residual block zero-initialized.
    static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

    /// Every parameter tensor with its stable name, in a fixed order.
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::size_t parameter_count() const;
    void zero_grad();
    /// Deep copy with fresh storage.
    ModelParams clone() const;
};

/// Point coordinates with per-point features.
struct PointBatch {
    std::vector<Vec3> coords;
    Tensor features; // [N x C]
};

/// Offset of p from the corner of its cell: p - floor(p * res) / res.
Vec3 localize(const Vec3& p, int resolution);

std::vector<std::size_t> assign_cells(std::span<const Vec3> coords, int resolution);

/// Per-point position encoding for every point at the given resolution.
Tensor position_encoding(Tape& tape, std::span<const Vec3> coords, int resolution, const MlpParams& mlp);

Tensor apply_mlp(Tape& tape, const Tensor& x, const MlpParams& mlp);

/// Softmax weights of one attention step, recorded for inspection.
struct AttentionRecord {
    int layer = 0;
    int resolution = 0;
    Tensor weights;                 // [N x C] or [N x 1]
    std::vector<std::size_t> cells; // occupied cell of each point
};

/// Aggregates point features into the grid cells that contain them with
/// learned per-channel weights; the incoming grid is added as a skip.
FeatureGrid point_grid_attention(Tape& tape, const PointBatch& points, const FeatureGrid& grid,
                                 const LayerParams& layer, AttentionKind kind = AttentionKind::Vector,
                                 AttentionRecord* record = nullptr);

/// 3^3 convolution (full or depthwise per layer) plus residual.
FeatureGrid grid_aggregate(Tape& tape, const FeatureGrid& grid, const LayerParams& layer);

/// New point features: old + value(old) + trilinear sample of the grid.
PointBatch point_update(Tape& tape, const PointBatch& points, const FeatureGrid& grid,
                        const LayerParams& layer);

struct EncodedField {
    /// f1 (final grid), f2 (decoder grid at base resolution before the last
    /// layer), f3 (decoder grid one level coarser).
    std::array<FeatureGrid, 3> grids;
};

/// Points are put into a canonical (lexicographic) order first, so the
/// result does not depend on the input order.
EncodedField encode(Tape& tape, std::span<const Vec3> points, const ModelParams& params,
                    std::vector<AttentionRecord>* attention = nullptr);

/// Occupancy logits [M x 1] for query points in [0,1]^3.
Tensor decode(Tape& tape, const EncodedField& field, std::span<const Vec3> queries, const ModelParams& params);

/// Inference helper: probabilities for many queries, evaluated in chunks
/// (optionally across threads) and concatenated in query order.
std::vector<double> predict_probabilities(const EncodedField& field, std::span<const Vec3> queries,
                                          const ModelParams& params, std::size_t chunk = 4096);

/// Numerically stable logistic function.
double occupancy_probability(double logit);

} // namespace gridformer
