// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include "byte_io.hpp"

#include <gridformer/checkpoint.hpp>
#include <gridformer/dataset_io.hpp>

#include <fmt/format.h>

namespace gridformer {

namespace {

constexpr std::uint8_t kF64Code = 3;

void
write_config(detail::ByteWriter& w, const ModelConfig& c) {
    w.u32(static_cast<std::uint32_t>(c.base_resolution));
    w.u32(static_cast<std::uint32_t>(c.channels));
    w.u32(static_cast<std::uint32_t>(c.unet_depth));
    w.u32(static_cast<std::uint32_t>(c.depthwise_last_k));
    w.u8(c.enable_downsampling ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(c.decoder_hidden));
    w.u32(static_cast<std::uint32_t>(c.decoder_blocks));
    w.u8(static_cast<std::uint8_t>(c.attention));
    w.u8(static_cast<std::uint8_t>(c.combine));
}

ModelConfig
read_config(detail::ByteReader& r) {
    ModelConfig c;
    c.base_resolution = static_cast<int>(r.u32());
    c.channels = static_cast<int>(r.u32());
    c.unet_depth = static_cast<int>(r.u32());
    c.depthwise_last_k = static_cast<int>(r.u32());
    c.enable_downsampling = r.u8() != 0;
    c.decoder_hidden = static_cast<int>(r.u32());
    c.decoder_blocks = static_cast<int>(r.u32());
    const auto attention = r.u8();
    const auto combine = r.u8();
    if (attention > 1 || combine > 1) {
        throw IoError("checkpoint: unknown attention or combine code");
    }
    c.attention = static_cast<AttentionKind>(attention);
    c.combine = static_cast<FeatureCombine>(combine);
    return c;
}

} // namespace

std::vector<std::uint8_t>
encode_checkpoint(const ModelParams& params) {
    detail::ByteWriter w;
    w.raw("GFCK");
    w.u32(kCheckpointFormatVersion);
    write_config(w, params.config);
    const auto named = params.named_parameters();
    w.u32(static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, t] : named) {
        w.str(name);
        w.u8(kF64Code);
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (const auto e : t.shape()) {
            w.u32(static_cast<std::uint32_t>(e));
        }
        for (const double v : t.values()) {
            w.f64(v);
        }
    }
    return w.take();
}

ModelParams
decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes, "checkpoint");
    if (r.raw(4) != "GFCK") {
        throw IoError("checkpoint: bad magic");
    }
    const auto version = r.u32();
    if (version != kCheckpointFormatVersion) {
        throw IoError(fmt::format("checkpoint: unsupported version {}", version));
    }
    const ModelConfig config = read_config(r);
    try {
        config.validate();
    } catch (const ContractError& e) {
        throw IoError(fmt::format("checkpoint: invalid model configuration: {}", e.what()));
    }
    ModelParams params = ModelParams::initialize(config, 0);
    auto named = params.named_parameters();
    const auto count = r.u32();
    if (count != named.size()) {
        throw IoError(fmt::format("checkpoint: {} tensors, configuration expects {}", count, named.size()));
    }
    for (auto& [name, t] : named) {
        const auto stored = r.str();
        if (stored != name) {
            throw IoError(fmt::format("checkpoint: expected tensor '{}', found '{}'", name, stored));
        }
        if (r.u8() != kF64Code) {
            throw IoError(fmt::format("checkpoint: tensor '{}' is not f64", name));
        }
        const auto rank = r.u8();
        Shape shape(rank);
        for (auto& e : shape) {
            e = r.u32();
        }
        if (shape != t.shape()) {
            throw IoError(fmt::format("checkpoint: tensor '{}' has shape {}, expected {}", name,
                                      shape_string(shape), shape_string(t.shape())));
        }
        for (auto& v : t.values()) {
            v = r.f64();
        }
    }
    if (!r.done()) {
        throw IoError("checkpoint: trailing bytes");
    }
    return params;
}

void
write_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
    write_file_bytes(path, encode_checkpoint(params));
}

ModelParams
read_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file_bytes(path));
}

} // namespace gridformer
