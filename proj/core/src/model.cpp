// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/error.hpp>
#include <gridformer/model.hpp>
#include <gridformer/parallel.hpp>
#include <gridformer/rng.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <memory>

namespace gridformer {

void
ModelConfig::validate() const {
    if (channels <= 0 || decoder_hidden <= 0) {
        throw ContractError(fmt::format("channels ({}) and decoder_hidden ({}) must be positive", channels,
                                        decoder_hidden));
    }
    if (unet_depth < 4) {
        throw ContractError(fmt::format("unet_depth {} < 4 leaves fewer than three decoder grids", unet_depth));
    }
    if (base_resolution < 1) {
        throw ContractError(fmt::format("base_resolution {} must be positive", base_resolution));
    }
    if (enable_downsampling) {
        const int divisor = 1 << (unet_depth - 2);
        if (base_resolution % divisor != 0) {
            throw ContractError(fmt::format("base_resolution {} must be divisible by {} with downsampling on",
                                            base_resolution, divisor));
        }
    }
    if (depthwise_last_k < 0 || depthwise_last_k > num_layers()) {
        throw ContractError(fmt::format("depthwise_last_k {} outside [0, {}]", depthwise_last_k, num_layers()));
    }
    if (decoder_blocks < 0) {
        throw ContractError("decoder_blocks must be non-negative");
    }
}

namespace {

int
level_of_layer(const ModelConfig& cfg, int layer) {
    return layer < cfg.unet_depth ? layer : 2 * cfg.unet_depth - 2 - layer;
}

int
level_resolution(const ModelConfig& cfg, int level) {
    if (!cfg.enable_downsampling || level <= 1) {
        return cfg.base_resolution;
    }
    return cfg.base_resolution >> (level - 1);
}

Tensor
uniform_tensor(Rng& rng, Shape shape, double bound) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.values()) {
        v = rng.uniform(-bound, bound);
    }
    return t;
}

LinearParams
make_linear(Rng& rng, std::size_t in, std::size_t out, bool zero = false) {
    const double bound = zero ? 0.0 : 1.0 / std::sqrt(static_cast<double>(in));
    LinearParams p;
    p.weight = zero ? Tensor::zeros({in, out}, true) : uniform_tensor(rng, {in, out}, bound);
    p.bias = zero ? Tensor::zeros({out}, true) : uniform_tensor(rng, {out}, bound);
    return p;
}

MlpParams
make_mlp(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out) {
    MlpParams m;
    m.first = make_linear(rng, in, hidden);
    m.second = make_linear(rng, hidden, out);
    return m;
}

void
push_linear(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name, const LinearParams& p) {
    out.emplace_back(name + ".weight", p.weight);
    out.emplace_back(name + ".bias", p.bias);
}

void
push_mlp(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name, const MlpParams& m) {
    push_linear(out, name + ".fc0", m.first);
    push_linear(out, name + ".fc1", m.second);
}

Tensor
coords_tensor(std::span<const Vec3> coords) {
    Tensor t = Tensor::zeros({coords.size(), 3});
    auto v = t.values();
    for (std::size_t i = 0; i < coords.size(); ++i) {
        v[3 * i] = coords[i][0];
        v[3 * i + 1] = coords[i][1];
        v[3 * i + 2] = coords[i][2];
    }
    return t;
}

using Support = std::shared_ptr<const std::vector<std::uint8_t>>;

Support
support_union(const Support& a, const Support& b) {
    if (!a || !b) {
        return nullptr;
    }
    auto out = std::make_shared<std::vector<std::uint8_t>>(*a);
    for (std::size_t i = 0; i < out->size(); ++i) {
        (*out)[i] |= (*b)[i];
    }
    return out;
}

Support
support_of_cells(std::span<const std::size_t> cells, std::size_t num_cells) {
    auto out = std::make_shared<std::vector<std::uint8_t>>(num_cells, 0);
    for (const auto c : cells) {
        (*out)[c] = 1;
    }
    return out;
}

FeatureGrid
add_grids(Tape& tape, const FeatureGrid& a, const FeatureGrid& b) {
    return FeatureGrid{a.resolution, ops::add(tape, a.features, b.features), support_union(a.support, b.support)};
}

} // namespace

int
ModelConfig::layer_resolution(int layer) const {
    return level_resolution(*this, level_of_layer(*this, layer));
}

ModelParams
ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed, "model-init");
    const auto c = static_cast<std::size_t>(config.channels);
    const auto h = static_cast<std::size_t>(config.decoder_hidden);
    ModelParams p;
    p.config = config;
    p.point_mlp = make_mlp(rng, 3, c, c);
    for (int l = 0; l < config.num_layers(); ++l) {
        LayerParams layer;
        layer.position = make_mlp(rng, 3, c, c);
        layer.query = make_mlp(rng, c, c, c);
        layer.value = make_mlp(rng, c, c, c);
        layer.weighting = make_mlp(rng, c, c, config.attention == AttentionKind::Vector ? c : 1);
        layer.key_kernel = uniform_tensor(rng, {27, c, c}, 1.0 / std::sqrt(27.0 * static_cast<double>(c)));
        layer.depthwise = config.layer_is_depthwise(l);
        layer.aggregate_kernel = layer.depthwise
                                     ? uniform_tensor(rng, {27, c}, 1.0 / std::sqrt(27.0))
                                     : uniform_tensor(rng, {27, c, c}, 1.0 / std::sqrt(27.0 * static_cast<double>(c)));
        p.layers.push_back(std::move(layer));
    }
    for (int k = 0; k < 3; ++k) {
        p.decoder.projections.push_back(make_linear(rng, c, h));
    }
    const std::size_t feature_dim = config.combine == FeatureCombine::Sum ? h : 3 * h;
    p.decoder.embed = make_linear(rng, 3, h);
    for (int b = 0; b < config.decoder_blocks; ++b) {
        p.decoder.conditioning.push_back(make_linear(rng, feature_dim, h));
        ResidualBlockParams block;
        block.first = make_linear(rng, h, h);
        block.second = make_linear(rng, h, h, true);
        p.decoder.blocks.push_back(std::move(block));
    }
    p.decoder.output = make_linear(rng, h, 1, true);
    return p;
}

std::vector<std::pair<std::string, Tensor>>
ModelParams::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    push_mlp(out, "point_mlp", point_mlp);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto prefix = fmt::format("layer{}", l);
        const auto& layer = layers[l];
        push_mlp(out, prefix + ".position", layer.position);
        push_mlp(out, prefix + ".query", layer.query);
        push_mlp(out, prefix + ".value", layer.value);
        push_mlp(out, prefix + ".weighting", layer.weighting);
        out.emplace_back(prefix + ".key_conv", layer.key_kernel);
        out.emplace_back(prefix + ".aggregate_conv", layer.aggregate_kernel);
    }
    for (std::size_t k = 0; k < decoder.projections.size(); ++k) {
        push_linear(out, fmt::format("decoder.projection{}", k), decoder.projections[k]);
    }
    push_linear(out, "decoder.embed", decoder.embed);
    for (std::size_t b = 0; b < decoder.blocks.size(); ++b) {
        push_linear(out, fmt::format("decoder.conditioning{}", b), decoder.conditioning[b]);
        push_linear(out, fmt::format("decoder.block{}.fc0", b), decoder.blocks[b].first);
        push_linear(out, fmt::format("decoder.block{}.fc1", b), decoder.blocks[b].second);
    }
    push_linear(out, "decoder.output", decoder.output);
    return out;
}

std::size_t
ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named_parameters()) {
        n += t.numel();
    }
    return n;
}

void
ModelParams::zero_grad() {
    for (auto& [name, t] : named_parameters()) {
        t.zero_grad();
    }
}

ModelParams
ModelParams::clone() const {
    // Re-initialize the structure, then overwrite every value.
    ModelParams copy = initialize(config, 0);
    auto dst = copy.named_parameters();
    const auto src = named_parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const auto v = src[i].second.values();
        std::copy(v.begin(), v.end(), dst[i].second.values().begin());
    }
    return copy;
}

Vec3
localize(const Vec3& p, int resolution) {
    Vec3 out;
    for (int a = 0; a < 3; ++a) {
        if (!(p[a] >= 0.0 && p[a] <= 1.0)) {
            throw DomainError(fmt::format("point ({}, {}, {}) outside the unit cube", p[0], p[1], p[2]));
        }
        const double cell = std::min(std::floor(p[a] * resolution), static_cast<double>(resolution - 1));
        out[a] = p[a] - cell / resolution;
    }
    return out;
}

std::vector<std::size_t>
assign_cells(std::span<const Vec3> coords, int resolution) {
    std::vector<std::size_t> cells(coords.size());
    for (std::size_t i = 0; i < coords.size(); ++i) {
        cells[i] = locate_cell(coords[i], resolution);
    }
    return cells;
}

Tensor
apply_mlp(Tape& tape, const Tensor& x, const MlpParams& mlp) {
    Tensor h = ops::linear(tape, x, mlp.first.weight, mlp.first.bias);
    h = ops::relu(tape, h);
    return ops::linear(tape, h, mlp.second.weight, mlp.second.bias);
}

Tensor
position_encoding(Tape& tape, std::span<const Vec3> coords, int resolution, const MlpParams& mlp) {
    std::vector<Vec3> local(coords.size());
    for (std::size_t i = 0; i < coords.size(); ++i) {
        local[i] = localize(coords[i], resolution);
    }
    return apply_mlp(tape, coords_tensor(local), mlp);
}

FeatureGrid
point_grid_attention(Tape& tape, const PointBatch& points, const FeatureGrid& grid, const LayerParams& layer,
                     AttentionKind kind, AttentionRecord* record) {
    const auto n = points.coords.size();
    if (points.features.extent(0) != n) {
        throw ContractError(fmt::format("{} point features for {} points", points.features.extent(0), n));
    }
    if (points.features.extent(1) != grid.channels()) {
        throw ContractError(fmt::format("point features have {} channels, grid has {}",
                                        points.features.extent(1), grid.channels()));
    }
    const int res = grid.resolution;
    const auto cells = assign_cells(points.coords, res);

    // Compact ids of the occupied cells, in ascending cell order.
    std::vector<std::size_t> occupied(cells);
    std::sort(occupied.begin(), occupied.end());
    occupied.erase(std::unique(occupied.begin(), occupied.end()), occupied.end());
    std::vector<std::size_t> slot(n);
    for (std::size_t j = 0; j < n; ++j) {
        slot[j] = static_cast<std::size_t>(std::lower_bound(occupied.begin(), occupied.end(), cells[j]) -
                                           occupied.begin());
    }

    const Tensor pos = position_encoding(tape, points.coords, res, layer.position);
    const Tensor keys = ops::conv3_at(tape, grid, layer.key_kernel, ConvMode::Full, occupied);
    const Tensor point_keys = ops::gather_rows(tape, keys, slot);
    const Tensor query = apply_mlp(tape, points.features, layer.query);
    const Tensor value = apply_mlp(tape, points.features, layer.value);

    const Tensor relation = ops::add(tape, ops::sub(tape, point_keys, query), pos);
    const Tensor logits = apply_mlp(tape, relation, layer.weighting);
    Tensor weights = ops::group_softmax(tape, logits, slot);
    if (record) {
        record->resolution = res;
        record->weights = weights;
        record->cells = cells;
    }
    if (kind == AttentionKind::Scalar) {
        weights = ops::broadcast_cols(tape, weights, grid.channels());
    }
    const Tensor messages = ops::mul(tape, weights, ops::add(tape, value, pos));
    const Tensor aggregated = ops::scatter_reduce(tape, messages, cells, grid.num_cells(), ReduceMode::Sum);
    return FeatureGrid{res, ops::add(tape, grid.features, aggregated),
                       support_union(grid.support, support_of_cells(occupied, grid.num_cells()))};
}

FeatureGrid
grid_aggregate(Tape& tape, const FeatureGrid& grid, const LayerParams& layer) {
    const auto mode = layer.depthwise ? ConvMode::Depthwise : ConvMode::Full;
    const FeatureGrid conv = ops::conv3(tape, grid, layer.aggregate_kernel, mode);
    return add_grids(tape, grid, conv);
}

PointBatch
point_update(Tape& tape, const PointBatch& points, const FeatureGrid& grid, const LayerParams& layer) {
    const Tensor value = apply_mlp(tape, points.features, layer.value);
    const Tensor sampled = ops::grid_interpolate(tape, grid, points.coords);
    PointBatch out;
    out.coords = points.coords;
    out.features = ops::add(tape, points.features, ops::add(tape, value, sampled));
    return out;
}

namespace {

struct LayerOutput {
    PointBatch points;
    FeatureGrid grid;
};

LayerOutput
transformer_layer(Tape& tape, const PointBatch& points, const FeatureGrid& grid, const ModelParams& params,
                  int index, std::vector<AttentionRecord>* attention) {
    AttentionRecord rec;
    rec.layer = index;
    const auto& layer = params.layers[static_cast<std::size_t>(index)];
    FeatureGrid g = point_grid_attention(tape, points, grid, layer, params.config.attention,
                                         attention ? &rec : nullptr);
    if (attention) {
        attention->push_back(std::move(rec));
    }
    g = grid_aggregate(tape, g, layer);
    PointBatch p = point_update(tape, points, g, layer);
    return {std::move(p), std::move(g)};
}

} // namespace

EncodedField
encode(Tape& tape, std::span<const Vec3> input, const ModelParams& params, std::vector<AttentionRecord>* attention) {
    const ModelConfig& cfg = params.config;
    cfg.validate();
    if (input.empty()) {
        throw ContractError("encode needs at least one point");
    }
    PointBatch points;
    points.coords.assign(input.begin(), input.end());
    std::sort(points.coords.begin(), points.coords.end());
    for (const auto& p : points.coords) {
        localize(p, 1);
    }
    points.features = apply_mlp(tape, coords_tensor(points.coords), params.point_mlp);

    const int base = cfg.base_resolution;
    const auto base_cells = assign_cells(points.coords, base);
    const auto base_count = static_cast<std::size_t>(base) * base * base;
    FeatureGrid grid{base, ops::scatter_reduce(tape, points.features, base_cells, base_count, ReduceMode::Mean),
                     support_of_cells(base_cells, base_count)};

    const int depth = cfg.unet_depth;
    std::vector<FeatureGrid> skips;
    int layer = 0;
    for (int level = 0; level < depth; ++level, ++layer) {
        if (level >= 2 && cfg.enable_downsampling) {
            grid = ops::resample_grid(tape, grid, ResampleFactor::Down2);
        }
        auto out = transformer_layer(tape, points, grid, params, layer, attention);
        points = std::move(out.points);
        grid = std::move(out.grid);
        skips.push_back(grid);
    }
    std::vector<FeatureGrid> decoded;
    for (int level = depth - 2; level >= 0; --level, ++layer) {
        if (level + 1 >= 2 && cfg.enable_downsampling) {
            grid = ops::resample_grid(tape, grid, ResampleFactor::Up2);
        }
        const auto& skip = skips[static_cast<std::size_t>(level)];
        grid = add_grids(tape, grid, skip);
        auto out = transformer_layer(tape, points, grid, params, layer, attention);
        points = std::move(out.points);
        grid = std::move(out.grid);
        decoded.push_back(grid);
    }
    const auto last = decoded.size() - 1;
    return EncodedField{{decoded[last], decoded[last - 1], decoded[last - 2]}};
}

Tensor
decode(Tape& tape, const EncodedField& field, std::span<const Vec3> queries, const ModelParams& params) {
    const auto& dec = params.decoder;
    std::vector<Tensor> projected;
    for (std::size_t k = 0; k < 3; ++k) {
        const Tensor sampled = ops::grid_interpolate(tape, field.grids[k], queries);
        projected.push_back(ops::linear(tape, sampled, dec.projections[k].weight, dec.projections[k].bias));
    }
    Tensor feature;
    if (params.config.combine == FeatureCombine::Sum) {
        feature = ops::add(tape, ops::add(tape, projected[0], projected[1]), projected[2]);
    } else {
        feature = ops::concat_cols(tape, projected);
    }
    Tensor net = ops::linear(tape, coords_tensor(queries), dec.embed.weight, dec.embed.bias);
    for (std::size_t b = 0; b < dec.blocks.size(); ++b) {
        net = ops::add(tape, net,
                       ops::linear(tape, feature, dec.conditioning[b].weight, dec.conditioning[b].bias));
        const auto& block = dec.blocks[b];
        Tensor h = ops::linear(tape, ops::relu(tape, net), block.first.weight, block.first.bias);
        Tensor dx = ops::linear(tape, ops::relu(tape, h), block.second.weight, block.second.bias);
        net = ops::add(tape, net, dx);
    }
    return ops::linear(tape, ops::relu(tape, net), dec.output.weight, dec.output.bias);
}

std::vector<double>
predict_probabilities(const EncodedField& field, std::span<const Vec3> queries, const ModelParams& params,
                      std::size_t chunk) {
    std::vector<double> out(queries.size());
    if (queries.empty()) {
        return out;
    }
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t chunks = (queries.size() + chunk - 1) / chunk;
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t begin = c * chunk;
        const std::size_t end = std::min(queries.size(), begin + chunk);
        Tape tape(false);
        const Tensor logits = decode(tape, field, queries.subspan(begin, end - begin), params);
        const auto v = logits.values();
        for (std::size_t i = begin; i < end; ++i) {
            out[i] = occupancy_probability(v[i - begin]);
        }
    });
    return out;
}

double
occupancy_probability(double logit) {
    if (logit >= 0.0) {
        return 1.0 / (1.0 + std::exp(-logit));
    }
    const double e = std::exp(logit);
    return e / (1.0 + e);
}

} // namespace gridformer
