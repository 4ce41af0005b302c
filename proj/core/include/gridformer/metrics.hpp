// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <gridformer/mesh.hpp>
#include <gridformer/shapes.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gridformer {

/// |pred and gt| / |pred or gt|; 1 when both are empty.
double volumetric_iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

struct PointSamples {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
};

/// Area-weighted triangle choice, uniform barycentric position, face normal.
PointSamples sample_mesh_points(const Mesh& mesh, std::size_t n, std::uint64_t seed);

/// Exact nearest neighbour over a fixed point set: uniform hash grid
/// searched in growing rings until no closer point can remain. Ties go to
/// the lower index.
class NearestNeighbors {
public:
    explicit NearestNeighbors(std::span<const Vec3> points);

    struct Hit {
        std::size_t index = 0;
        double squared_distance = 0.0;
    };
    Hit nearest(const Vec3& q) const;

private:
    std::vector<Vec3> points_;
    Vec3 origin_{};
    double cell_ = 1.0;
    std::array<long, 3> dims_{};
    std::vector<std::size_t> cell_start_;
    std::vector<std::size_t> order_;
};

struct ChamferResult {
    double cd_l1 = 0.0;
    double cd_l2 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double fscore = 0.0;
};

ChamferResult chamfer_and_fscore(std::span<const Vec3> a, std::span<const Vec3> b, double threshold = 0.01);

/// Symmetric mean |n_x . n_nn(x)|; normals must be unit length.
double normal_consistency(const PointSamples& a, const PointSamples& b);

/// Inside test for a closed mesh by +x ray parity.
std::vector<std::uint8_t> mesh_occupancy(const Mesh& mesh, std::span<const Vec3> queries);

struct EvalConfig {
    std::size_t surface_samples = 100000;
    std::size_t iou_queries = 100000;
    double fscore_threshold = 0.01;
    double tau = 0.5;
    std::uint64_t seed = 0;
};

struct MetricsReport {
    double iou = 0.0;
    double chamfer_l1_x100 = 0.0;
    double chamfer_l2_x10000 = 0.0;
    double normal_consistency = 0.0;
    double f_score_1pct = 0.0;
    std::size_t surface_samples = 0;
    std::size_t iou_queries = 0;
    std::uint64_t seed = 0;
};

/// Occupancy probabilities for a batch of points.
using OccupancyPredictor = std::function<std::vector<double>(std::span<const Vec3>)>;

/// Surface metrics against samples of the analytic shape. IoU thresholds
/// `predictor` at tau when given, otherwise uses the mesh inside test.
MetricsReport evaluate_reconstruction(const Mesh& mesh, const ShapeSpec& spec, const EvalConfig& cfg,
                                      const OccupancyPredictor& predictor = {});

/// Compares two meshes with identical sampling streams on both sides.
MetricsReport compare_meshes(const Mesh& pred, const Mesh& reference, const EvalConfig& cfg);

/// One "key = value" line per field.
std::string format_metrics(const MetricsReport& report);
MetricsReport parse_metrics(const std::string& text);
void write_metrics(const std::filesystem::path& path, const MetricsReport& report);

} // namespace gridformer
