// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/error.hpp>
#include <gridformer/metrics.hpp>
#include <gridformer/rng.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace gf = gridformer;

namespace {

double
sq_dist(const gf::Vec3& a, const gf::Vec3& b) {
    return (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]);
}

std::vector<gf::Vec3>
random_cloud(std::size_t n, gf::Rng& rng) {
    std::vector<gf::Vec3> pts(n);
    for (auto& p : pts) {
        p = {rng.uniform(), rng.uniform(), rng.uniform()};
    }
    return pts;
}

// All-pairs reference for chamfer and F-score.
gf::ChamferResult
brute_chamfer(const std::vector<gf::Vec3>& a, const std::vector<gf::Vec3>& b, double threshold) {
    auto directed = [&](const std::vector<gf::Vec3>& from, const std::vector<gf::Vec3>& to, double& l1, double& l2,
                        double& within) {
        l1 = l2 = within = 0.0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) {
                best = std::min(best, sq_dist(p, q));
            }
            l1 += std::sqrt(best);
            l2 += best;
            within += std::sqrt(best) <= threshold;
        }
        const auto n = static_cast<double>(from.size());
        l1 /= n;
        l2 /= n;
        within /= n;
    };
    double l1a, l2a, pa, l1b, l2b, rb;
    directed(a, b, l1a, l2a, pa);
    directed(b, a, l1b, l2b, rb);
    gf::ChamferResult r;
    r.cd_l1 = 0.5 * (l1a + l1b);
    r.cd_l2 = 0.5 * (l2a + l2b);
    r.precision = pa;
    r.recall = rb;
    r.fscore = (pa + rb) > 0 ? 2 * pa * rb / (pa + rb) : 0.0;
    return r;
}

gf::Mesh
two_triangles() {
    gf::Mesh m;
    // Areas 1 and 3 (a unit right triangle pair, the second scaled by sqrt 3).
    const double s = std::sqrt(3.0);
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 2, 0}, {0, 0, 1}, {s, 0, 1}, {0, 2 * s, 1}};
    m.triangles = {{0, 1, 2}, {3, 4, 5}};
    gf::compute_vertex_normals(m);
    return m;
}

gf::Mesh
analytic_mesh(const gf::ShapeSpec& spec, int res) {
    const gf::FieldFunction field = [&](std::span<const gf::Vec3> q) {
        std::vector<double> out(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) {
            out[i] = 1.0 / (1.0 + std::exp(200.0 * spec.signed_distance(q[i])));
        }
        return out;
    };
    return gf::dense_extract(field, res, 0.5).mesh;
}

std::array<gf::Vec3, 3>
random_rotation(gf::Rng& rng) {
    // Rotation from a random unit quaternion.
    double q[4];
    double n = 0.0;
    for (auto& x : q) {
        x = rng.normal();
        n += x * x;
    }
    n = std::sqrt(n);
    for (auto& x : q) {
        x /= n;
    }
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    return {gf::Vec3{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
            gf::Vec3{2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
            gf::Vec3{2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}};
}

gf::Vec3
rigid_map(const std::array<gf::Vec3, 3>& r, const gf::Vec3& p, const gf::Vec3& t = {0, 0, 0}) {
    return {r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2]};
}

} // namespace

TEST(VolumetricIou, Examples) {
    const std::vector<std::uint8_t> a{1, 1, 0, 0}, b{1, 0, 1, 0}, none{0, 0, 1, 1};
    EXPECT_EQ(gf::volumetric_iou(a, a), 1.0);
    EXPECT_EQ(gf::volumetric_iou(a, none), 0.0);
    EXPECT_NEAR(gf::volumetric_iou(a, b), 1.0 / 3.0, 1e-15);
    const std::vector<std::uint8_t> short_one{1};
    EXPECT_THROW(gf::volumetric_iou(a, short_one), gf::ContractError);
}

TEST(SampleMeshPoints, SingleTrianglePointsAreInside) {
    gf::Mesh m;
    m.vertices = {{0.1, 0.1, 0.2}, {0.8, 0.2, 0.2}, {0.3, 0.9, 0.2}};
    m.triangles = {{0, 1, 2}};
    gf::compute_vertex_normals(m);
    const auto s = gf::sample_mesh_points(m, 2000, 1);
    ASSERT_EQ(s.points.size(), 2000u);
    const auto& a = m.vertices[0];
    const auto& b = m.vertices[1];
    const auto& c = m.vertices[2];
    for (const auto& p : s.points) {
        EXPECT_NEAR(p[2], 0.2, 1e-12);
        // Barycentric coordinates in the z = 0.2 plane.
        const double det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
        const double l1 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det;
        const double l2 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det;
        EXPECT_GE(l1, -1e-12);
        EXPECT_GE(l2, -1e-12);
        EXPECT_GE(1 - l1 - l2, -1e-12);
    }
    for (const auto& n : s.normals) {
        EXPECT_NEAR(std::abs(n[2]), 1.0, 1e-12);
    }
}

TEST(SampleMeshPoints, AreaWeightedAndSeeded) {
    const auto m = two_triangles();
    const auto s = gf::sample_mesh_points(m, 100000, 2);
    double lower = 0.0;
    for (const auto& p : s.points) {
        lower += p[2] < 0.5;
    }
    const double ratio = lower / (100000.0 - lower);
    EXPECT_NEAR(ratio, 1.0 / 3.0, 0.03 / 3.0);
    const auto again = gf::sample_mesh_points(m, 100000, 2);
    EXPECT_EQ(s.points, again.points);
    EXPECT_EQ(s.normals, again.normals);
}

TEST(Chamfer, Examples) {
    const std::vector<gf::Vec3> a{{0, 0, 0}}, b{{0.3, 0, 0}};
    auto r = gf::chamfer_and_fscore(a, b);
    EXPECT_NEAR(r.cd_l1, 0.3, 1e-15);
    EXPECT_NEAR(r.cd_l2, 0.09, 1e-15);
    EXPECT_EQ(r.fscore, 0.0);
    gf::Rng rng(3, "same");
    const auto c = random_cloud(50, rng);
    r = gf::chamfer_and_fscore(c, c);
    EXPECT_EQ(r.cd_l1, 0.0);
    EXPECT_EQ(r.cd_l2, 0.0);
    EXPECT_EQ(r.fscore, 1.0);
}

TEST(Chamfer, MatchesAllPairsOracle) {
    gf::Rng rng(4, "oracle");
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_cloud(100, rng);
        const auto b = random_cloud(100, rng);
        const double thr = trial % 2 ? 0.01 : 0.1;
        const auto got = gf::chamfer_and_fscore(a, b, thr);
        const auto want = brute_chamfer(a, b, thr);
        EXPECT_NEAR(got.cd_l1, want.cd_l1, 1e-12);
        EXPECT_NEAR(got.cd_l2, want.cd_l2, 1e-12);
        EXPECT_NEAR(got.precision, want.precision, 1e-12);
        EXPECT_NEAR(got.recall, want.recall, 1e-12);
        EXPECT_NEAR(got.fscore, want.fscore, 1e-12);
        const auto swapped = gf::chamfer_and_fscore(b, a, thr);
        EXPECT_NEAR(swapped.cd_l1, got.cd_l1, 1e-15);
        EXPECT_NEAR(swapped.cd_l2, got.cd_l2, 1e-15);
        EXPECT_GE(got.cd_l1, 0.0);
    }
}

TEST(NearestNeighbors, EqualsBruteForceExactly) {
    gf::Rng rng(5, "nn");
    for (int trial = 0; trial < 3; ++trial) {
        auto pts = random_cloud(1000, rng);
        // Clusters and a far outlier stress the ring search.
        for (std::size_t i = 0; i < 300; ++i) {
            pts[i] = {0.5 + 0.01 * rng.normal(), 0.5 + 0.01 * rng.normal(), 0.5 + 0.01 * rng.normal()};
        }
        pts[999] = {3.0, -2.0, 0.5};
        const gf::NearestNeighbors nn(pts);
        const auto queries = random_cloud(500, rng);
        for (const auto& q : queries) {
            std::size_t best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < pts.size(); ++i) {
                const double d = sq_dist(q, pts[i]);
                if (d < bd) {
                    bd = d;
                    best = i;
                }
            }
            const auto hit = nn.nearest(q);
            EXPECT_EQ(hit.index, best);
            EXPECT_NEAR(hit.squared_distance, bd, 1e-15);
        }
    }
}

TEST(NormalConsistency, Examples) {
    gf::Rng rng(6, "nc");
    gf::PointSamples a;
    a.points = random_cloud(200, rng);
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        a.normals.push_back(i % 2 ? gf::Vec3{0, 0, 1} : gf::Vec3{0, 1, 0});
    }
    EXPECT_NEAR(gf::normal_consistency(a, a), 1.0, 1e-15);
    gf::PointSamples flipped = a;
    for (auto& n : flipped.normals) {
        n = {-n[0], -n[1], -n[2]};
    }
    EXPECT_NEAR(gf::normal_consistency(a, flipped), 1.0, 1e-15);
    gf::PointSamples orth = a;
    for (auto& n : orth.normals) {
        n = {1, 0, 0};
    }
    EXPECT_NEAR(gf::normal_consistency(a, orth), 0.0, 1e-15);
}

TEST(RigidInvariance, FscoreAndNormalConsistency) {
    gf::Rng rng(7, "rigid");
    gf::PointSamples a, b;
    a.points = random_cloud(300, rng);
    b.points = random_cloud(300, rng);
    for (auto* s : {&a, &b}) {
        for (std::size_t i = 0; i < s->points.size(); ++i) {
            gf::Vec3 n{rng.normal(), rng.normal(), rng.normal()};
            const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
            s->normals.push_back({n[0] / len, n[1] / len, n[2] / len});
        }
    }
    const auto base = gf::chamfer_and_fscore(a.points, b.points, 0.1);
    const double nc = gf::normal_consistency(a, b);
    for (int trial = 0; trial < 5; ++trial) {
        const auto r = random_rotation(rng);
        const gf::Vec3 t{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        gf::PointSamples ra, rb;
        for (std::size_t i = 0; i < 300; ++i) {
            ra.points.push_back(rigid_map(r, a.points[i], t));
            rb.points.push_back(rigid_map(r, b.points[i], t));
            ra.normals.push_back(rigid_map(r, a.normals[i]));
            rb.normals.push_back(rigid_map(r, b.normals[i]));
        }
        EXPECT_NEAR(gf::chamfer_and_fscore(ra.points, rb.points, 0.1).fscore, base.fscore, 1e-9);
        EXPECT_NEAR(gf::normal_consistency(ra, rb), nc, 1e-9);
    }
}

TEST(MeshOccupancy, MatchesAnalyticSphere) {
    const auto spec = gf::ShapeSpec::sphere({0.5, 0.5, 0.5}, 0.3);
    const auto mesh = analytic_mesh(spec, 64);
    gf::Rng rng(8, "inside");
    const auto q = random_cloud(20000, rng);
    const auto occ = gf::mesh_occupancy(mesh, q);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double d = spec.signed_distance(q[i]);
        if (std::abs(d) > 0.01) {
            wrong += occ[i] != (d < 0 ? 1 : 0);
        }
    }
    EXPECT_EQ(wrong, 0u);
}

TEST(EvaluateReconstruction, SelfReconstructionScoresNearPerfect) {
    const auto spec = gf::ShapeSpec::unite({gf::ShapeSpec::sphere({0.35, 0.5, 0.5}, 0.2),
                                            gf::ShapeSpec::box({0.62, 0.5, 0.5}, {0.15, 0.15, 0.15})});
    const auto mesh = analytic_mesh(spec, 128);
    gf::EvalConfig cfg;
    cfg.seed = 3;
    const auto r = gf::evaluate_reconstruction(mesh, spec, cfg);
    EXPECT_GT(r.iou, 0.99);
    EXPECT_GT(r.normal_consistency, 0.99);
    EXPECT_GT(r.f_score_1pct, 0.99);
    EXPECT_GE(r.chamfer_l1_x100, 0.0);
    EXPECT_GE(r.chamfer_l2_x10000, 0.0);
    EXPECT_EQ(r.surface_samples, 100000u);
    EXPECT_EQ(r.iou_queries, 100000u);
    const auto again = gf::evaluate_reconstruction(mesh, spec, cfg);
    EXPECT_EQ(gf::format_metrics(r), gf::format_metrics(again));
}

TEST(CompareMeshes, IdenticalMeshesArePerfect) {
    const auto spec = gf::ShapeSpec::torus({0.5, 0.5, 0.5}, 0.25, 0.1);
    const auto mesh = analytic_mesh(spec, 48);
    gf::EvalConfig cfg;
    cfg.surface_samples = 20000;
    cfg.iou_queries = 20000;
    const auto r = gf::compare_meshes(mesh, mesh, cfg);
    EXPECT_EQ(r.iou, 1.0);
    EXPECT_EQ(r.chamfer_l1_x100, 0.0);
    EXPECT_EQ(r.chamfer_l2_x10000, 0.0);
    EXPECT_EQ(r.normal_consistency, 1.0);
    EXPECT_EQ(r.f_score_1pct, 1.0);
}

TEST(MetricsReport, FormatAndParseRoundTrip) {
    gf::MetricsReport r;
    r.iou = 0.123456789012345678;
    r.chamfer_l1_x100 = 1.5;
    r.chamfer_l2_x10000 = 2.25e-3;
    r.normal_consistency = 0.9;
    r.f_score_1pct = 0.75;
    r.surface_samples = 1000;
    r.iou_queries = 2000;
    r.seed = 42;
    const auto text = gf::format_metrics(r);
    for (const char* key : {"iou", "chamfer_l1_x100", "chamfer_l2_x10000", "normal_consistency", "f_score_1pct"}) {
        EXPECT_NE(text.find(std::string(key) + " = "), std::string::npos) << key;
    }
    const auto back = gf::parse_metrics(text);
    EXPECT_EQ(back.iou, r.iou);
    EXPECT_EQ(back.chamfer_l2_x10000, r.chamfer_l2_x10000);
    EXPECT_EQ(back.seed, 42u);
    EXPECT_EQ(gf::format_metrics(back), text);
    EXPECT_THROW(gf::parse_metrics("iou = 1\nbogus = 2\n"), gf::Error);
}
