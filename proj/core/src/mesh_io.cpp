// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/dataset_io.hpp>
#include <gridformer/error.hpp>
#include <gridformer/mesh.hpp>

#include <fmt/format.h>

#include <charconv>
#include <sstream>

namespace gridformer {

std::string
format_obj(const Mesh& mesh) {
    std::string out;
    out.reserve(mesh.vertices.size() * 40 + mesh.triangles.size() * 24);
    for (const auto& v : mesh.vertices) {
        fmt::format_to(std::back_inserter(out), "v {:.9g} {:.9g} {:.9g}\n", v[0], v[1], v[2]);
    }
    for (const auto& t : mesh.triangles) {
        fmt::format_to(std::back_inserter(out), "f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    return out;
}

void
write_obj(const std::filesystem::path& path, const Mesh& mesh) {
    const auto text = format_obj(mesh);
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

namespace {

std::uint32_t
face_index(const std::string& token, std::size_t vertex_count, std::size_t line) {
    // "a", "a/b", "a//c" and "a/b/c" all reference vertex a.
    const auto end = token.find('/');
    const auto head = token.substr(0, end);
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), value);
    if (ec != std::errc() || ptr != head.data() + head.size()) {
        throw IoError(fmt::format("obj line {}: bad face index '{}'", line, token));
    }
    if (value < 0) {
        value += static_cast<long long>(vertex_count) + 1;
    }
    if (value < 1 || static_cast<std::size_t>(value) > vertex_count) {
        throw IoError(fmt::format("obj line {}: face index {} out of range", line, token));
    }
    return static_cast<std::uint32_t>(value - 1);
}

} // namespace

Mesh
parse_obj(const std::string& text) {
    Mesh mesh;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::string tag;
        if (!(fields >> tag) || tag[0] == '#') {
            continue;
        }
        if (tag == "v") {
            Vec3 v{};
            if (!(fields >> v[0] >> v[1] >> v[2])) {
                throw IoError(fmt::format("obj line {}: malformed vertex", line_no));
            }
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<std::uint32_t> poly;
            std::string token;
            while (fields >> token) {
                poly.push_back(face_index(token, mesh.vertices.size(), line_no));
            }
            if (poly.size() < 3) {
                throw IoError(fmt::format("obj line {}: face with fewer than 3 vertices", line_no));
            }
            for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
                mesh.triangles.push_back({poly[0], poly[i], poly[i + 1]});
            }
        }
    }
    compute_vertex_normals(mesh);
    return mesh;
}

Mesh
read_obj(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return parse_obj(std::string(bytes.begin(), bytes.end()));
}

} // namespace gridformer
