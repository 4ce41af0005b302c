// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/dataset_io.hpp>
#include <gridformer/error.hpp>
#include <gridformer/metrics.hpp>
#include <gridformer/parallel.hpp>
#include <gridformer/rng.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace gridformer {

namespace {

double
squared_distance(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

double
dot(const Vec3& a, const Vec3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

Vec3
triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 u{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    const Vec3 v{c[0] - a[0], c[1] - a[1], c[2] - a[2]};
    return {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
}

constexpr std::size_t kChunk = 1024;

// Nearest-neighbour distances from every point of `from` into `index`,
// combined in point order.
std::vector<NearestNeighbors::Hit>
nearest_all(const NearestNeighbors& index, std::span<const Vec3> from) {
    std::vector<NearestNeighbors::Hit> hits(from.size());
    const std::size_t chunks = (from.size() + kChunk - 1) / kChunk;
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t end = std::min(from.size(), (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i) {
            hits[i] = index.nearest(from[i]);
        }
    });
    return hits;
}

void
check_unit_normals(const PointSamples& s, const char* which) {
    if (s.normals.size() != s.points.size()) {
        throw DimensionError(fmt::format("{}: {} normals for {} points", which, s.normals.size(), s.points.size()));
    }
    for (std::size_t i = 0; i < s.normals.size(); ++i) {
        const double len = std::sqrt(dot(s.normals[i], s.normals[i]));
        if (std::abs(len - 1.0) > 1e-6) {
            throw ContractError(fmt::format("{}: normal {} has length {}", which, i, len));
        }
    }
}

} // namespace

double
volumetric_iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
    if (pred.size() != gt.size()) {
        throw ContractError(fmt::format("IoU over {} predictions and {} references", pred.size(), gt.size()));
    }
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        inter += (pred[i] && gt[i]) ? 1 : 0;
        uni += (pred[i] || gt[i]) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

PointSamples
sample_mesh_points(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
    if (mesh.triangles.empty()) {
        throw ContractError("cannot sample an empty mesh; the reconstruction is not comparable");
    }
    std::vector<double> cumulative;
    std::vector<Vec3> unit;
    cumulative.reserve(mesh.triangles.size());
    double total = 0.0;
    for (const auto& t : mesh.triangles) {
        Vec3 nrm = triangle_normal(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
        const double len = std::sqrt(dot(nrm, nrm));
        total += 0.5 * len;
        cumulative.push_back(total);
        if (len > 0.0) {
            for (auto& c : nrm) {
                c /= len;
            }
        }
        unit.push_back(nrm);
    }
    if (!(total > 0.0)) {
        throw ContractError("mesh has zero surface area");
    }
    Rng rng(seed, "mesh-surface");
    PointSamples out;
    out.points.reserve(n);
    out.normals.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        const double pick = rng.uniform() * total;
        auto f = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) -
                                          cumulative.begin());
        f = std::min(f, mesh.triangles.size() - 1);
        double u = rng.uniform();
        double v = rng.uniform();
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        const auto& t = mesh.triangles[f];
        const auto& a = mesh.vertices[t[0]];
        const auto& b = mesh.vertices[t[1]];
        const auto& c = mesh.vertices[t[2]];
        Vec3 p;
        for (int k = 0; k < 3; ++k) {
            p[k] = a[k] + u * (b[k] - a[k]) + v * (c[k] - a[k]);
        }
        out.points.push_back(p);
        out.normals.push_back(unit[f]);
    }
    return out;
}

NearestNeighbors::NearestNeighbors(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    if (points_.empty()) {
        throw ContractError("nearest-neighbour index over an empty point set");
    }
    Vec3 lo = points_[0];
    Vec3 hi = points_[0];
    for (const auto& p : points_) {
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
    const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2], 1e-9});
    // About two points per occupied cell for surface-like sets.
    cell_ = std::max(extent / std::sqrt(static_cast<double>(points_.size()) / 2.0), extent * 1e-4);
    origin_ = lo;
    std::size_t cells = 1;
    for (int a = 0; a < 3; ++a) {
        dims_[a] = static_cast<long>(std::floor((hi[a] - lo[a]) / cell_)) + 1;
        cells *= static_cast<std::size_t>(dims_[a]);
    }
    std::vector<std::size_t> cell_of(points_.size());
    cell_start_.assign(cells + 1, 0);
    for (std::size_t i = 0; i < points_.size(); ++i) {
        std::array<long, 3> c{};
        for (int a = 0; a < 3; ++a) {
            c[a] = std::clamp(static_cast<long>(std::floor((points_[i][a] - origin_[a]) / cell_)), 0L, dims_[a] - 1);
        }
        cell_of[i] = static_cast<std::size_t>((c[0] * dims_[1] + c[1]) * dims_[2] + c[2]);
        ++cell_start_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) {
        cell_start_[c + 1] += cell_start_[c];
    }
    order_.resize(points_.size());
    std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
    for (std::size_t i = 0; i < points_.size(); ++i) {
        order_[fill[cell_of[i]]++] = i;
    }
}

NearestNeighbors::Hit
NearestNeighbors::nearest(const Vec3& q) const {
    std::array<long, 3> c{};
    long start = 0;
    long reach = 0;
    for (int a = 0; a < 3; ++a) {
        const double u = std::floor((q[a] - origin_[a]) / cell_);
        c[a] = static_cast<long>(std::clamp(u, -1e9, 1e9));
        const long outside = c[a] < 0 ? -c[a] : (c[a] >= dims_[a] ? c[a] - dims_[a] + 1 : 0);
        start = std::max(start, outside);
        reach = std::max({reach, std::abs(c[a]), std::abs(dims_[a] - 1 - c[a])});
    }
    Hit best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
    const auto visit = [&](long x, long y, long z) {
        const auto id = static_cast<std::size_t>((x * dims_[1] + y) * dims_[2] + z);
        for (std::size_t k = cell_start_[id]; k < cell_start_[id + 1]; ++k) {
            const std::size_t i = order_[k];
            const double d = squared_distance(points_[i], q);
            if (d < best.squared_distance || (d == best.squared_distance && i < best.index)) {
                best = {i, d};
            }
        }
    };
    for (long r = start; r <= reach; ++r) {
        for (long x = std::max(c[0] - r, 0L); x <= std::min(c[0] + r, dims_[0] - 1); ++x) {
            for (long y = std::max(c[1] - r, 0L); y <= std::min(c[1] + r, dims_[1] - 1); ++y) {
                if (std::abs(x - c[0]) == r || std::abs(y - c[1]) == r) {
                    for (long z = std::max(c[2] - r, 0L); z <= std::min(c[2] + r, dims_[2] - 1); ++z) {
                        visit(x, y, z);
                    }
                } else {
                    if (c[2] - r >= 0 && c[2] - r < dims_[2]) {
                        visit(x, y, c[2] - r);
                    }
                    if (r > 0 && c[2] + r >= 0 && c[2] + r < dims_[2]) {
                        visit(x, y, c[2] + r);
                    }
                }
            }
        }
        // Unvisited points lie at least (r - 1) whole cells away; one cell
        // of slack absorbs rounding in the cell assignment.
        const double bound = static_cast<double>(r - 1) * cell_;
        if (r >= 1 && best.squared_distance < bound * bound) {
            break;
        }
    }
    return best;
}

ChamferResult
chamfer_and_fscore(std::span<const Vec3> a, std::span<const Vec3> b, double threshold) {
    if (a.empty() || b.empty()) {
        throw ContractError("chamfer distance over an empty point set");
    }
    const NearestNeighbors index_a(a);
    const NearestNeighbors index_b(b);
    const auto ab = nearest_all(index_b, a);
    const auto ba = nearest_all(index_a, b);
    double l1_ab = 0.0;
    double l2_ab = 0.0;
    std::size_t hit_a = 0;
    for (const auto& h : ab) {
        const double d = std::sqrt(h.squared_distance);
        l1_ab += d;
        l2_ab += h.squared_distance;
        hit_a += d <= threshold ? 1 : 0;
    }
    double l1_ba = 0.0;
    double l2_ba = 0.0;
    std::size_t hit_b = 0;
    for (const auto& h : ba) {
        const double d = std::sqrt(h.squared_distance);
        l1_ba += d;
        l2_ba += h.squared_distance;
        hit_b += d <= threshold ? 1 : 0;
    }
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    ChamferResult r;
    r.cd_l1 = 0.5 * (l1_ab / na + l1_ba / nb);
    r.cd_l2 = 0.5 * (l2_ab / na + l2_ba / nb);
    r.precision = static_cast<double>(hit_a) / na;
    r.recall = static_cast<double>(hit_b) / nb;
    r.fscore = (r.precision + r.recall) > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

double
normal_consistency(const PointSamples& a, const PointSamples& b) {
    check_unit_normals(a, "normal_consistency(a)");
    check_unit_normals(b, "normal_consistency(b)");
    if (a.points.empty() || b.points.empty()) {
        throw ContractError("normal consistency over an empty point set");
    }
    const NearestNeighbors index_a(a.points);
    const NearestNeighbors index_b(b.points);
    const auto ab = nearest_all(index_b, a.points);
    const auto ba = nearest_all(index_a, b.points);
    double sum_ab = 0.0;
    for (std::size_t i = 0; i < ab.size(); ++i) {
        sum_ab += std::abs(dot(a.normals[i], b.normals[ab[i].index]));
    }
    double sum_ba = 0.0;
    for (std::size_t i = 0; i < ba.size(); ++i) {
        sum_ba += std::abs(dot(b.normals[i], a.normals[ba[i].index]));
    }
    return 0.5 * (sum_ab / static_cast<double>(ab.size()) + sum_ba / static_cast<double>(ba.size()));
}

std::vector<std::uint8_t>
mesh_occupancy(const Mesh& mesh, std::span<const Vec3> queries) {
    std::vector<std::uint8_t> inside(queries.size(), 0);
    if (mesh.triangles.empty()) {
        return inside;
    }
    double lo_y = mesh.vertices[0][1];
    double hi_y = lo_y;
    double lo_z = mesh.vertices[0][2];
    double hi_z = lo_z;
    for (const auto& v : mesh.vertices) {
        lo_y = std::min(lo_y, v[1]);
        hi_y = std::max(hi_y, v[1]);
        lo_z = std::min(lo_z, v[2]);
        hi_z = std::max(hi_z, v[2]);
    }
    const long g = std::clamp(static_cast<long>(std::sqrt(static_cast<double>(mesh.triangles.size()))), 1L, 512L);
    const double sy = std::max(hi_y - lo_y, 1e-12) / static_cast<double>(g);
    const double sz = std::max(hi_z - lo_z, 1e-12) / static_cast<double>(g);
    const auto bucket_of = [&](double y, double z) {
        const long by = std::clamp(static_cast<long>(std::floor((y - lo_y) / sy)), 0L, g - 1);
        const long bz = std::clamp(static_cast<long>(std::floor((z - lo_z) / sz)), 0L, g - 1);
        return std::pair{by, bz};
    };
    std::vector<std::vector<std::uint32_t>> buckets(static_cast<std::size_t>(g * g));
    for (std::uint32_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        double y0 = 1e300, y1 = -1e300, z0 = 1e300, z1 = -1e300;
        for (const auto v : tri) {
            y0 = std::min(y0, mesh.vertices[v][1]);
            y1 = std::max(y1, mesh.vertices[v][1]);
            z0 = std::min(z0, mesh.vertices[v][2]);
            z1 = std::max(z1, mesh.vertices[v][2]);
        }
        const auto [ay, az] = bucket_of(y0, z0);
        const auto [by, bz] = bucket_of(y1, z1);
        for (long y = ay; y <= by; ++y) {
            for (long z = az; z <= bz; ++z) {
                buckets[static_cast<std::size_t>(y * g + z)].push_back(t);
            }
        }
    }
    const std::size_t chunks = (queries.size() + kChunk - 1) / kChunk;
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t end = std::min(queries.size(), (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i) {
            // A fixed sub-lattice offset keeps rays off mesh edges and vertices.
            const double qx = queries[i][0];
            const double qy = queries[i][1] + 1.2345678e-11;
            const double qz = queries[i][2] + 2.3456789e-11;
            if (qy < lo_y || qy > hi_y || qz < lo_z || qz > hi_z) {
                continue;
            }
            const auto [by, bz] = bucket_of(qy, qz);
            unsigned crossings = 0;
            for (const auto t : buckets[static_cast<std::size_t>(by * g + bz)]) {
                const auto& tri = mesh.triangles[t];
                const Vec3& a = mesh.vertices[tri[0]];
                const Vec3& b = mesh.vertices[tri[1]];
                const Vec3& d = mesh.vertices[tri[2]];
                const double w0 = (b[1] - qy) * (d[2] - qz) - (b[2] - qz) * (d[1] - qy);
                const double w1 = (d[1] - qy) * (a[2] - qz) - (d[2] - qz) * (a[1] - qy);
                const double w2 = (a[1] - qy) * (b[2] - qz) - (a[2] - qz) * (b[1] - qy);
                const bool pos = w0 > 0.0 && w1 > 0.0 && w2 > 0.0;
                const bool neg = w0 < 0.0 && w1 < 0.0 && w2 < 0.0;
                if (!pos && !neg) {
                    continue;
                }
                const double x = (w0 * a[0] + w1 * b[0] + w2 * d[0]) / (w0 + w1 + w2);
                crossings += x > qx ? 1U : 0U;
            }
            inside[i] = crossings % 2;
        }
    });
    return inside;
}

namespace {

MetricsReport
assemble(const PointSamples& pred, const PointSamples& gt, double iou, const EvalConfig& cfg) {
    const ChamferResult cd = chamfer_and_fscore(pred.points, gt.points, cfg.fscore_threshold);
    MetricsReport r;
    r.iou = iou;
    r.chamfer_l1_x100 = cd.cd_l1 * 100.0;
    r.chamfer_l2_x10000 = cd.cd_l2 * 10000.0;
    r.normal_consistency = normal_consistency(pred, gt);
    r.f_score_1pct = cd.fscore;
    r.surface_samples = cfg.surface_samples;
    r.iou_queries = cfg.iou_queries;
    r.seed = cfg.seed;
    return r;
}

std::vector<Vec3>
uniform_queries(std::size_t m, std::uint64_t seed) {
    Rng rng(seed, "eval-iou");
    std::vector<Vec3> q(m);
    for (auto& p : q) {
        p = {rng.uniform(), rng.uniform(), rng.uniform()};
    }
    return q;
}

} // namespace

MetricsReport
evaluate_reconstruction(const Mesh& mesh, const ShapeSpec& spec, const EvalConfig& cfg,
                        const OccupancyPredictor& predictor) {
    if (mesh.empty()) {
        throw ContractError("cannot evaluate an empty mesh");
    }
    Rng gt_rng(cfg.seed, "eval-gt-surface");
    const SurfaceSamples gt_surface = sample_surface_exact(spec, cfg.surface_samples, gt_rng);
    const PointSamples gt{gt_surface.points, gt_surface.normals};
    const PointSamples pred = sample_mesh_points(mesh, cfg.surface_samples, cfg.seed);

    const auto queries = uniform_queries(cfg.iou_queries, cfg.seed);
    std::vector<std::uint8_t> gt_occ(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        gt_occ[i] = analytic_occupancy(spec, queries[i]);
    }
    std::vector<std::uint8_t> pred_occ;
    if (predictor) {
        const auto prob = predictor(queries);
        if (prob.size() != queries.size()) {
            throw ContractError(fmt::format("predictor returned {} values for {} queries", prob.size(),
                                            queries.size()));
        }
        pred_occ.resize(prob.size());
        for (std::size_t i = 0; i < prob.size(); ++i) {
            pred_occ[i] = prob[i] >= cfg.tau ? 1 : 0;
        }
    } else {
        pred_occ = mesh_occupancy(mesh, queries);
    }
    return assemble(pred, gt, volumetric_iou(pred_occ, gt_occ), cfg);
}

MetricsReport
compare_meshes(const Mesh& pred, const Mesh& reference, const EvalConfig& cfg) {
    if (pred.empty() || reference.empty()) {
        throw ContractError("cannot compare an empty mesh");
    }
    const PointSamples p = sample_mesh_points(pred, cfg.surface_samples, cfg.seed);
    const PointSamples r = sample_mesh_points(reference, cfg.surface_samples, cfg.seed);
    const auto queries = uniform_queries(cfg.iou_queries, cfg.seed);
    const auto iou = volumetric_iou(mesh_occupancy(pred, queries), mesh_occupancy(reference, queries));
    return assemble(p, r, iou, cfg);
}

std::string
format_metrics(const MetricsReport& r) {
    std::string out;
    auto add = [&out](const char* key, auto value) { fmt::format_to(std::back_inserter(out), "{} = {}\n", key, value); };
    add("iou", fmt::format("{:.17g}", r.iou));
    add("chamfer_l1_x100", fmt::format("{:.17g}", r.chamfer_l1_x100));
    add("chamfer_l2_x10000", fmt::format("{:.17g}", r.chamfer_l2_x10000));
    add("normal_consistency", fmt::format("{:.17g}", r.normal_consistency));
    add("f_score_1pct", fmt::format("{:.17g}", r.f_score_1pct));
    add("surface_samples", r.surface_samples);
    add("iou_queries", r.iou_queries);
    add("seed", r.seed);
    return out;
}

MetricsReport
parse_metrics(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) {
            continue;
        }
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    const auto get = [&kv](const char* key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) {
            throw IoError(fmt::format("metrics document lacks '{}'", key));
        }
        return it->second;
    };
    MetricsReport r;
    r.iou = std::stod(get("iou"));
    r.chamfer_l1_x100 = std::stod(get("chamfer_l1_x100"));
    r.chamfer_l2_x10000 = std::stod(get("chamfer_l2_x10000"));
    r.normal_consistency = std::stod(get("normal_consistency"));
    r.f_score_1pct = std::stod(get("f_score_1pct"));
    r.surface_samples = std::stoull(get("surface_samples"));
    r.iou_queries = std::stoull(get("iou_queries"));
    r.seed = std::stoull(get("seed"));
    return r;
}

void
write_metrics(const std::filesystem::path& path, const MetricsReport& report) {
    const auto text = format_metrics(report);
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

} // namespace gridformer
