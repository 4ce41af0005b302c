// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include "byte_io.hpp"

#include <gridformer/dataset_io.hpp>
#include <gridformer/error.hpp>

#include <fmt/format.h>

#include <fstream>
#include <iterator>

namespace gridformer {

namespace {

std::size_t
dtype_size(DType d) {
    switch (d) {
    case DType::F32: return 4;
    case DType::U8: return 1;
    case DType::U32: return 4;
    }
    throw IoError("unknown dtype");
}

const NamedArray*
find(const std::vector<NamedArray>& arrays, std::string_view name) {
    for (const auto& a : arrays) {
        if (a.name == name) {
            return &a;
        }
    }
    return nullptr;
}

std::vector<Vec3>
read_rows(const NamedArray& a) {
    if (a.dtype != DType::F32 || a.extents.size() != 2 || a.extents[1] != 3) {
        throw IoError(fmt::format("array '{}' must be an N x 3 f32 array", a.name));
    }
    std::vector<Vec3> rows(a.extents[0]);
    detail::ByteReader r(a.bytes, "dataset");
    for (auto& row : rows) {
        for (auto& v : row) {
            v = static_cast<double>(r.f32());
        }
    }
    return rows;
}

std::vector<std::uint8_t>
read_u8(const NamedArray& a) {
    if (a.dtype != DType::U8 || a.extents.size() != 1) {
        throw IoError(fmt::format("array '{}' must be a rank-1 u8 array", a.name));
    }
    return a.bytes;
}

} // namespace

std::size_t
NamedArray::element_count() const {
    std::size_t n = 1;
    for (auto e : extents) {
        n *= e;
    }
    return n;
}

std::vector<std::uint8_t>
encode_container(const std::vector<NamedArray>& arrays) {
    detail::ByteWriter w;
    w.raw("GFDS");
    w.u32(kDatasetFormatVersion);
    w.u32(static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        if (a.bytes.size() != a.element_count() * dtype_size(a.dtype)) {
            throw ContractError(fmt::format("array '{}' holds {} bytes, expected {}", a.name, a.bytes.size(),
                                            a.element_count() * dtype_size(a.dtype)));
        }
        w.str(a.name);
        w.u8(static_cast<std::uint8_t>(a.dtype));
        w.u8(static_cast<std::uint8_t>(a.extents.size()));
        for (auto e : a.extents) {
            w.u32(e);
        }
        w.raw(a.bytes);
    }
    return w.take();
}

std::vector<NamedArray>
decode_container(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes, "dataset");
    if (r.raw(4) != "GFDS") {
        throw IoError("not a GFDS dataset (bad magic)");
    }
    const auto version = r.u32();
    if (version != kDatasetFormatVersion) {
        throw IoError(fmt::format("unsupported GFDS version {}", version));
    }
    const auto count = r.u32();
    std::vector<NamedArray> arrays;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedArray a;
        a.name = r.str();
        const auto code = r.u8();
        if (code > 2) {
            throw IoError(fmt::format("array '{}' has unknown dtype code {}", a.name, code));
        }
        a.dtype = static_cast<DType>(code);
        const auto rank = r.u8();
        for (int k = 0; k < rank; ++k) {
            a.extents.push_back(r.u32());
        }
        a.bytes = r.bytes(a.element_count() * dtype_size(a.dtype));
        arrays.push_back(std::move(a));
    }
    if (!r.done()) {
        throw IoError("trailing bytes after the last GFDS array");
    }
    return arrays;
}

NamedArray
make_f32_array(std::string name, const std::vector<Vec3>& rows) {
    detail::ByteWriter w;
    for (const auto& row : rows) {
        for (double v : row) {
            w.f32(static_cast<float>(v));
        }
    }
    return NamedArray{std::move(name), DType::F32, {static_cast<std::uint32_t>(rows.size()), 3}, w.take()};
}

NamedArray
make_u8_array(std::string name, const std::vector<std::uint8_t>& values) {
    return NamedArray{std::move(name), DType::U8, {static_cast<std::uint32_t>(values.size())}, values};
}

std::vector<std::uint8_t>
encode_dataset(const Dataset& ds) {
    std::vector<NamedArray> arrays;
    arrays.push_back(make_f32_array("points", ds.points));
    arrays.push_back(make_f32_array("queries", ds.queries.coords));
    arrays.push_back(make_u8_array("labels", ds.queries.label));
    if (!ds.queries.boundary_mask.empty()) {
        arrays.push_back(make_u8_array("boundary_mask", ds.queries.boundary_mask));
    }
    return encode_container(arrays);
}

Dataset
decode_dataset(const std::vector<std::uint8_t>& bytes) {
    const auto arrays = decode_container(bytes);
    const auto* points = find(arrays, "points");
    const auto* queries = find(arrays, "queries");
    const auto* labels = find(arrays, "labels");
    if (!points || !queries || !labels) {
        throw IoError("dataset must contain 'points', 'queries' and 'labels'");
    }
    Dataset ds;
    ds.points = read_rows(*points);
    ds.queries.coords = read_rows(*queries);
    ds.queries.label = read_u8(*labels);
    if (ds.queries.label.size() != ds.queries.coords.size()) {
        throw IoError(fmt::format("{} labels for {} queries", ds.queries.label.size(),
                                  ds.queries.coords.size()));
    }
    for (auto l : ds.queries.label) {
        if (l > 1) {
            throw IoError(fmt::format("label value {} is not 0 or 1", l));
        }
    }
    if (const auto* mask = find(arrays, "boundary_mask")) {
        ds.queries.boundary_mask = read_u8(*mask);
        if (ds.queries.boundary_mask.size() != ds.queries.coords.size()) {
            throw IoError("boundary_mask length does not match the query count");
        }
    } else {
        ds.queries.boundary_mask.assign(ds.queries.coords.size(), 0);
    }
    if (ds.points.empty()) {
        throw IoError("dataset has no input points");
    }
    return ds;
}

std::vector<std::uint8_t>
read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
    }
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void
write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError(fmt::format("failed writing '{}'", path.string()));
    }
}

void
write_dataset(const std::filesystem::path& path, const Dataset& ds) {
    write_file_bytes(path, encode_dataset(ds));
}

Dataset
read_dataset(const std::filesystem::path& path) {
    return decode_dataset(read_file_bytes(path));
}

} // namespace gridformer
