// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/fields.hpp>
#include <gridformer/mesh.hpp>
#include <gridformer/metrics.hpp>
#include <gridformer/model.hpp>
#include <gridformer/ops.hpp>
#include <gridformer/rng.hpp>
#include <gridformer/shapes.hpp>

#include <benchmark/benchmark.h>

#include <cmath>

namespace gf = gridformer;

namespace {

std::vector<gf::Vec3>
uniform_points(std::size_t n, std::uint64_t seed) {
    gf::Rng rng(seed, "bench");
    std::vector<gf::Vec3> pts(n);
    for (auto& p : pts) {
        p = {rng.uniform(), rng.uniform(), rng.uniform()};
    }
    return pts;
}

gf::Tensor
random_tensor(gf::Shape shape, std::uint64_t seed, bool grad = false) {
    gf::Rng rng(seed, "bench-tensor");
    std::size_t n = 1;
    for (auto e : shape) {
        n *= e;
    }
    std::vector<double> v(n);
    for (auto& x : v) {
        x = rng.uniform(-0.1, 0.1);
    }
    return gf::Tensor::from_values(shape, std::move(v), grad);
}

gf::ShapeSpec
scene() {
    return gf::ShapeSpec::unite({gf::ShapeSpec::sphere({0.35, 0.5, 0.5}, 0.2),
                                 gf::ShapeSpec::box({0.62, 0.5, 0.5}, {0.15, 0.15, 0.15})});
}

} // namespace

// Dense 3x3x3 convolution; arg = resolution, channels fixed at 32.
void
BM_Conv3Full(benchmark::State& state) {
    const int res = static_cast<int>(state.range(0));
    const std::size_t cells = static_cast<std::size_t>(res) * res * res;
    gf::FeatureGrid grid{res, random_tensor({cells, 32}, 1), nullptr};
    const auto kernel = random_tensor({27, 32, 32}, 2);
    for (auto _ : state) {
        gf::Tape tape(false);
        benchmark::DoNotOptimize(gf::ops::conv3(tape, grid, kernel, gf::ConvMode::Full));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * cells));
}
BENCHMARK(BM_Conv3Full)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void
BM_Conv3Backward(benchmark::State& state) {
    const int res = 16;
    const std::size_t cells = static_cast<std::size_t>(res) * res * res;
    gf::FeatureGrid grid{res, random_tensor({cells, 32}, 1, true), nullptr};
    const auto kernel = random_tensor({27, 32, 32}, 2, true);
    for (auto _ : state) {
        gf::Tape tape(true);
        const auto y = gf::ops::conv3(tape, grid, kernel, gf::ConvMode::Full);
        auto loss = gf::ops::sum(tape, y.features);
        tape.backward(loss);
    }
}
BENCHMARK(BM_Conv3Backward)->Unit(benchmark::kMillisecond);

void
BM_GridInterpolate(benchmark::State& state) {
    gf::FeatureGrid grid{32, random_tensor({32 * 32 * 32, 32}, 3), nullptr};
    const auto q = uniform_points(static_cast<std::size_t>(state.range(0)), 4);
    for (auto _ : state) {
        gf::Tape tape(false);
        benchmark::DoNotOptimize(gf::ops::grid_interpolate(tape, grid, q));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * q.size()));
}
BENCHMARK(BM_GridInterpolate)->Arg(4096)->Unit(benchmark::kMillisecond);

// Full encoder on a 3000-point cloud with the default model.
void
BM_Encode(benchmark::State& state) {
    gf::ModelConfig cfg;
    cfg.channels = static_cast<int>(state.range(0));
    cfg.decoder_hidden = cfg.channels;
    const auto params = gf::ModelParams::initialize(cfg, 5);
    const auto pts = gf::sample_surface(scene(), 3000, 0.005, 6);
    for (auto _ : state) {
        gf::Tape tape(false);
        benchmark::DoNotOptimize(gf::encode(tape, pts, params));
    }
}
BENCHMARK(BM_Encode)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void
BM_PredictProbabilities(benchmark::State& state) {
    gf::ModelConfig cfg;
    const auto params = gf::ModelParams::initialize(cfg, 7);
    const auto pts = gf::sample_surface(scene(), 3000, 0.005, 8);
    gf::Tape tape(false);
    const auto field = gf::encode(tape, pts, params);
    const auto q = uniform_points(static_cast<std::size_t>(state.range(0)), 9);
    for (auto _ : state) {
        benchmark::DoNotOptimize(gf::predict_probabilities(field, q, params));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * q.size()));
}
BENCHMARK(BM_PredictProbabilities)->Arg(16384)->Unit(benchmark::kMillisecond);

void
BM_MarchingCubes(benchmark::State& state) {
    const auto s = scene();
    const gf::FieldFunction field = [&](std::span<const gf::Vec3> q) {
        std::vector<double> out(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) {
            out[i] = 1.0 / (1.0 + std::exp(100.0 * s.signed_distance(q[i])));
        }
        return out;
    };
    const auto grid = gf::sample_dense(field, static_cast<int>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(gf::marching_cubes(grid, 0.5));
    }
}
BENCHMARK(BM_MarchingCubes)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void
BM_ExtractBoundary(benchmark::State& state) {
    const auto q = gf::sample_queries(scene(), static_cast<std::size_t>(state.range(0)), 10);
    for (auto _ : state) {
        benchmark::DoNotOptimize(gf::extract_boundary(q, 0.08));
    }
}
BENCHMARK(BM_ExtractBoundary)->Arg(100000)->Unit(benchmark::kMillisecond);

void
BM_Chamfer(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = uniform_points(n, 11), b = uniform_points(n, 12);
    for (auto _ : state) {
        benchmark::DoNotOptimize(gf::chamfer_and_fscore(a, b));
    }
}
BENCHMARK(BM_Chamfer)->Arg(100000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
