// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Pass criterion names as arguments to run a
// subset; `--report FILE` also writes the lines to FILE.
//
#include <gridformer_cli/commands.hpp>
#include <gridformer_cli/config.hpp>

#include <gridformer/dataset_io.hpp>
#include <gridformer/fields.hpp>
#include <gridformer/gradcheck_suite.hpp>
#include <gridformer/mesh.hpp>
#include <gridformer/metrics.hpp>
#include <gridformer/model.hpp>
#include <gridformer/ops.hpp>
#include <gridformer/rng.hpp>

#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <sys/wait.h>

namespace gf = gridformer;
namespace cli = gridformer::cli;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double
seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double
dist2(const gf::Vec3& a, const gf::Vec3& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

std::vector<gf::Vec3>
uniform_points(std::size_t n, gf::Rng& rng, double lo = 0.0, double hi = 1.0) {
    std::vector<gf::Vec3> pts(n);
    for (auto& p : pts) {
        p = {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
    }
    return pts;
}

// Gaussian blobs so that many cells hold several points.
std::vector<gf::Vec3>
clustered_points(std::size_t n, gf::Rng& rng) {
    std::vector<gf::Vec3> centers = uniform_points(4, rng, 0.2, 0.8);
    std::vector<gf::Vec3> pts(n);
    for (auto& p : pts) {
        const auto& c = centers[rng.below(centers.size())];
        for (std::size_t k = 0; k < 3; ++k) {
            p[k] = std::clamp(c[k] + 0.05 * rng.normal(), 0.0, 1.0);
        }
    }
    return pts;
}

void
randomize(gf::ModelParams& params, std::uint64_t seed, double scale) {
    gf::Rng rng(seed, "acceptance-params");
    for (auto& [name, t] : params.named_parameters()) {
        for (auto& v : t.values()) {
            v = rng.uniform(-scale, scale);
        }
    }
}

gf::FieldFunction
smooth_sphere(const gf::Vec3& c, double r) {
    return [=](std::span<const gf::Vec3> q) {
        std::vector<double> out(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) {
            out[i] = 1.0 / (1.0 + std::exp(40.0 * (std::sqrt(dist2(q[i], c)) - r)));
        }
        return out;
    };
}

std::string
read_text(const fs::path& p) {
    const auto b = gf::read_file_bytes(p);
    return {b.begin(), b.end()};
}

int
run_tool(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(GRIDFORMER_TOOL_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------------------

Outcome
gradient_suite() {
    if (gf::kPrimitiveTolerance != 1e-6 || gf::kModelTolerance != 1e-3) {
        return {false, "suite tolerances drifted from 1e-6 / 1e-3"};
    }
    const auto t0 = Clock::now();
    std::ostringstream log;
    const int code = cli::cmd_gradcheck(cli::GradcheckOptions{}, log);
    const double secs = seconds_since(t0);
    double prim = 0.0, model = 0.0;
    for (const auto& e : gf::primitive_gradchecks(5, 0)) {
        prim = std::max(prim, e.max_rel_err);
    }
    for (const auto& e : gf::model_gradchecks(0)) {
        model = std::max(model, e.max_rel_err);
    }
    const bool pass = code == 0 && secs < 60.0;
    return {pass, fmt::format("exit {}, {:.1f} s (limit 60), worst primitive {:.2e}, worst model loss {:.2e}", code,
                              secs, prim, model)};
}

Outcome
attention_normalization() {
    double worst = 0.0;
    std::size_t cells_checked = 0;
    bool negative = false;
    for (int cloud = 0; cloud < 100; ++cloud) {
        gf::ModelConfig cfg;
        cfg.base_resolution = 8;
        cfg.channels = 4;
        cfg.decoder_hidden = 4;
        cfg.decoder_blocks = 1;
        cfg.attention = cloud % 2 ? gf::AttentionKind::Scalar : gf::AttentionKind::Vector;
        auto params = gf::ModelParams::initialize(cfg, static_cast<std::uint64_t>(cloud));
        randomize(params, static_cast<std::uint64_t>(cloud), 1.0);
        gf::Rng rng(static_cast<std::uint64_t>(cloud), "norm-cloud");
        const auto pts = clustered_points(20 + rng.below(200), rng);
        std::vector<gf::AttentionRecord> records;
        gf::Tape tape(false);
        gf::encode(tape, pts, params, &records);
        for (const auto& rec : records) {
            const std::size_t c = rec.weights.extent(1);
            std::map<std::size_t, std::vector<double>> sums;
            for (std::size_t j = 0; j < rec.cells.size(); ++j) {
                auto& s = sums[rec.cells[j]];
                s.resize(c, 0.0);
                for (std::size_t k = 0; k < c; ++k) {
                    const double w = rec.weights.values()[j * c + k];
                    negative = negative || w < 0.0;
                    s[k] += w;
                }
            }
            for (const auto& [cell, s] : sums) {
                for (double v : s) {
                    worst = std::max(worst, std::abs(v - 1.0));
                }
            }
            cells_checked += sums.size();
        }
    }
    return {worst <= 1e-6 && !negative && cells_checked > 0,
            fmt::format("100 clouds, {} non-empty cells over all layers, max |sum-1| = {:.2e} (limit 1e-6)",
                        cells_checked, worst)};
}

Outcome
permutation_invariance() {
    gf::ModelConfig cfg;
    cfg.base_resolution = 8;
    cfg.channels = 8;
    cfg.decoder_hidden = 8;
    cfg.decoder_blocks = 1;
    auto params = gf::ModelParams::initialize(cfg, 21);
    randomize(params, 21, 0.4);
    gf::Rng rng(21, "perm");
    std::size_t differing = 0;
    const int instances = 20;
    for (int trial = 0; trial < instances; ++trial) {
        const auto pts = trial % 2 ? clustered_points(50, rng) : uniform_points(50, rng);
        std::vector<gf::Vec3> shuffled(pts);
        rng.shuffle(std::span<gf::Vec3>(shuffled));
        gf::Tape t1(false), t2(false);
        const auto a = gf::encode(t1, pts, params);
        const auto b = gf::encode(t2, shuffled, params);
        for (std::size_t g = 0; g < 3; ++g) {
            const auto va = a.grids[g].features.values(), vb = b.grids[g].features.values();
            if (va.size() != vb.size() || std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) != 0) {
                ++differing;
            }
        }
    }
    return {differing == 0,
            fmt::format("{} shuffled 50-point instances, {} of {} grids differ bitwise", instances, differing,
                        3 * instances)};
}

Outcome
interpolation_exactness() {
    gf::Rng rng(31, "interp");
    const int res = 8;
    const std::size_t cells = res * res * res;
    gf::FeatureGrid constant{res, gf::Tensor::zeros({cells, 1}), nullptr};
    gf::FeatureGrid ramp{res, gf::Tensor::zeros({cells, 3}), nullptr};
    for (int i = 0; i < res; ++i) {
        for (int j = 0; j < res; ++j) {
            for (int k = 0; k < res; ++k) {
                const auto row = gf::cell_index(i, j, k, res);
                constant.features.values()[row] = 0.8125;
                ramp.features.values()[3 * row] = (i + 0.5) / res;
                ramp.features.values()[3 * row + 1] = (j + 0.5) / res;
                ramp.features.values()[3 * row + 2] = (k + 0.5) / res;
            }
        }
    }
    auto everywhere = uniform_points(5000, rng);
    everywhere.push_back({0, 0, 0});
    everywhere.push_back({1, 1, 1});
    const auto interior = uniform_points(5000, rng, 0.5 / res, 1.0 - 0.5 / res);
    gf::Tape tape(false);
    const auto yc = gf::ops::grid_interpolate(tape, constant, everywhere);
    const auto yr = gf::ops::grid_interpolate(tape, ramp, interior);
    double err_c = 0.0, err_r = 0.0;
    for (std::size_t i = 0; i < everywhere.size(); ++i) {
        err_c = std::max(err_c, std::abs(yc.values()[i] - 0.8125));
    }
    for (std::size_t i = 0; i < interior.size(); ++i) {
        for (std::size_t k = 0; k < 3; ++k) {
            err_r = std::max(err_r, std::abs(yr.values()[3 * i + k] - interior[i][k]));
        }
    }
    return {err_c <= 1e-6 && err_r <= 1e-6,
            fmt::format("constant max err {:.2e}, interior ramp max err {:.2e} (limit 1e-6)", err_c, err_r)};
}

Outcome
boundary_oracle() {
    const auto scene = cli::default_scene();
    gf::Rng rng(41, "boundary");
    gf::QuerySet q;
    q.coords = uniform_points(2000, rng);
    for (const auto& p : q.coords) {
        q.label.push_back(scene.signed_distance(p) <= 0.0 ? 1 : 0);
    }
    auto brute = [&](double r) {
        std::vector<std::uint8_t> mask(q.size(), 0);
        for (std::size_t i = 0; i < q.size(); ++i) {
            for (std::size_t j = 0; j < q.size(); ++j) {
                if (q.label[i] != q.label[j] && dist2(q.coords[i], q.coords[j]) <= r * r) {
                    mask[i] = 1;
                    break;
                }
            }
        }
        return mask;
    };
    const auto got = gf::extract_boundary(q, 0.08);
    const auto want = brute(0.08);
    std::size_t mismatches = 0, flagged = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        mismatches += got.queries.boundary_mask[i] != want[i];
        flagged += want[i];
    }
    bool monotone = true;
    std::vector<std::uint8_t> prev(q.size(), 0);
    for (double r : {0.005, 0.02, 0.04, 0.08, 0.12, 0.2, 0.5}) {
        const auto mask = gf::extract_boundary(q, r).queries.boundary_mask;
        if (mask != brute(r)) {
            ++mismatches;
        }
        for (std::size_t i = 0; i < q.size(); ++i) {
            monotone = monotone && prev[i] <= mask[i];
        }
        prev = mask;
    }
    return {mismatches == 0 && monotone && got.boundary_count == flagged && flagged > 0,
            fmt::format("2000 queries, {} flagged at r=0.08, {} mismatches vs brute force, monotone over 7 radii: {}",
                        flagged, mismatches, monotone ? "yes" : "no")};
}

Outcome
mise_equals_dense() {
    const auto t0 = Clock::now();
    const auto field = smooth_sphere({0.5, 0.5, 0.5}, 0.3);
    const auto mise = gf::mise_extract(field, {32, 2, 0.5});
    const auto dense = gf::dense_extract(field, 128, 0.5);
    const double secs = seconds_since(t0);
    bool same = mise.mesh.triangles.size() == dense.mesh.triangles.size() &&
                mise.mesh.vertices.size() == dense.mesh.vertices.size() && !mise.mesh.empty();
    double worst = 0.0;
    if (same) {
        auto a = mise.mesh.vertices, b = dense.mesh.vertices;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        for (std::size_t i = 0; i < a.size(); ++i) {
            worst = std::max(worst, std::sqrt(dist2(a[i], b[i])));
        }
        same = worst <= 1e-9;
    }
    const bool pass = same && mise.evaluations < dense.evaluations && secs < 120.0;
    return {pass, fmt::format("triangles {} vs {}, vertices {} vs {}, max vertex gap {:.1e}, evaluations {} vs {}, "
                              "{:.1f} s (limit 120)",
                              mise.mesh.triangles.size(), dense.mesh.triangles.size(), mise.mesh.vertices.size(),
                              dense.mesh.vertices.size(), worst, mise.evaluations, dense.evaluations, secs)};
}

Outcome
marching_cubes_topology() {
    const gf::Vec3 c{0.5, 0.5, 0.5};
    const double r = 0.3;
    const gf::FieldFunction hard = [&](std::span<const gf::Vec3> q) {
        std::vector<double> out(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) {
            out[i] = dist2(q[i], c) <= r * r ? 1.0 : 0.0;
        }
        return out;
    };
    const auto mesh = gf::marching_cubes(gf::sample_dense(hard, 64), 0.5);
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
    for (const auto& t : mesh.triangles) {
        for (std::size_t e = 0; e < 3; ++e) {
            const auto a = t[e], b = t[(e + 1) % 3];
            ++edges[{std::min(a, b), std::max(a, b)}];
        }
    }
    std::size_t bad_edges = 0;
    for (const auto& [e, n] : edges) {
        bad_edges += n != 2;
    }
    const long euler = static_cast<long>(mesh.vertices.size()) - static_cast<long>(edges.size()) +
                       static_cast<long>(mesh.triangles.size());
    double worst = 0.0;
    for (const auto& v : mesh.vertices) {
        worst = std::max(worst, std::abs(std::sqrt(dist2(v, c)) - r));
    }
    const double limit = std::sqrt(3.0) / 64.0;
    return {!mesh.empty() && bad_edges == 0 && euler == 2 && worst <= limit,
            fmt::format("{} vertices, {} edges not shared by exactly 2 triangles, Euler {}, max radius error {:.4f} "
                        "(limit {:.4f})",
                        mesh.vertices.size(), bad_edges, euler, worst, limit)};
}

Outcome
metrics_oracle() {
    gf::Rng rng(51, "metrics");
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = uniform_points(100, rng), b = uniform_points(100, rng, 0.1, 0.9);
        const double thr = 0.02 + 0.01 * trial;
        double l1a = 0, l2a = 0, l1b = 0, l2b = 0;
        std::size_t pa = 0, rb = 0;
        auto nearest = [](const gf::Vec3& p, const std::vector<gf::Vec3>& set) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& s : set) {
                best = std::min(best, dist2(p, s));
            }
            return best;
        };
        for (const auto& p : a) {
            const double d2 = nearest(p, b);
            l1a += std::sqrt(d2);
            l2a += d2;
            pa += std::sqrt(d2) < thr;
        }
        for (const auto& p : b) {
            const double d2 = nearest(p, a);
            l1b += std::sqrt(d2);
            l2b += d2;
            rb += std::sqrt(d2) < thr;
        }
        const double precision = pa / 100.0, recall = rb / 100.0;
        const double fs = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
        const auto got = gf::chamfer_and_fscore(a, b, thr);
        worst = std::max({worst, std::abs(got.cd_l1 - 0.5 * (l1a + l1b) / 100.0),
                          std::abs(got.cd_l2 - 0.5 * (l2a + l2b) / 100.0), std::abs(got.fscore - fs)});
    }
    const auto scene = cli::default_scene();
    const gf::FieldFunction field = [&](std::span<const gf::Vec3> q) {
        std::vector<double> out(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) {
            out[i] = 1.0 / (1.0 + std::exp(100.0 * scene.signed_distance(q[i])));
        }
        return out;
    };
    const auto mesh = gf::dense_extract(field, 64).mesh;
    const auto self = gf::compare_meshes(mesh, mesh, gf::EvalConfig{});
    const bool identical = self.iou == 1.0 && self.chamfer_l1_x100 == 0.0 && self.chamfer_l2_x10000 == 0.0 &&
                           self.normal_consistency == 1.0 && self.f_score_1pct == 1.0;
    return {worst <= 1e-12 && identical,
            fmt::format("max deviation from all-pairs oracle {:.1e} (limit 1e-12); identical mesh IoU {} CD-L1 {} "
                        "CD-L2 {} NC {} FS {}",
                        worst, self.iou, self.chamfer_l1_x100, self.chamfer_l2_x10000, self.normal_consistency,
                        self.f_score_1pct)};
}

// ---------------------------------------------------------------------------
// Experiments through the command layer.

struct Scratch {
    fs::path root;
    Scratch() {
        root = fs::temp_directory_path() / fmt::format("gridformer_acceptance_{}", ::getpid());
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Scratch() { fs::remove_all(root); }
};

gf::MetricsReport
metrics_of(const fs::path& p) {
    return gf::parse_metrics(read_text(p));
}

void
expect_ok(int code, const char* what) {
    if (code != 0) {
        throw std::runtime_error(fmt::format("{} exited with {}", what, code));
    }
}

Outcome
toy_overfit(const fs::path& dir) {
    cli::ExperimentConfig c;
    c.boundary_optimization = false;
    c.train.plateau_stop = true;
    c.train.stage1_steps = 600;
    fs::create_directories(dir);
    std::ostringstream log;
    const auto t0 = Clock::now();
    expect_ok(cli::cmd_gen_data(c, dir / "data.gfds", log), "gen-data");
    expect_ok(cli::cmd_train(c, dir / "data.gfds", dir / "run", log), "train");
    const auto ck = dir / "run" / "checkpoint-final.gfck";
    expect_ok(cli::cmd_reconstruct(c, ck, dir / "data.gfds", dir / "mesh.obj", log), "reconstruct");
    expect_ok(cli::cmd_eval(c, dir / "mesh.obj", dir / "metrics.txt", ck, dir / "data.gfds", log), "eval");
    const double secs = seconds_since(t0);
    const auto m = metrics_of(dir / "metrics.txt");
    std::size_t steps = 0;
    {
        std::ifstream trace(dir / "run" / "loss_trace.tsv");
        std::string line;
        std::getline(trace, line);
        while (std::getline(trace, line)) {
            ++steps;
        }
    }
    return {m.iou >= 0.90 && m.iou_queries == 100000 && secs < 1800.0,
            fmt::format("IoU {:.4f} on {} held-out queries (limit >= 0.90), {} steps, CD-L2x1e4 {:.4f}, "
                        "{:.0f} s (limit 1800)",
                        m.iou, m.iou_queries, steps, m.chamfer_l2_x10000, secs)};
}

struct AblationRun {
    double stage1 = 0.0;
    double final = 0.0;
};

AblationRun
ablation_run(const fs::path& dir, double sigma, std::uint64_t seed) {
    cli::ExperimentConfig c;
    c.data.sigma = sigma;
    c.model.channels = 16;
    c.train.stage1_steps = 300;
    c.train.stage2_steps = 200;
    c.seeds.data = seed;
    c.seeds.model = 100 + seed;
    c.seeds.train = 200 + seed;
    // Both checkpoints of a run are scored with the same sample streams.
    c.seeds.eval = 4;
    fs::create_directories(dir);
    std::ostringstream log;
    expect_ok(cli::cmd_gen_data(c, dir / "data.gfds", log), "gen-data");
    expect_ok(cli::cmd_train(c, dir / "data.gfds", dir / "run", log), "train");
    AblationRun out;
    for (const char* stage : {"stage1", "final"}) {
        const auto ck = dir / "run" / fmt::format("checkpoint-{}.gfck", stage);
        const auto mesh = dir / fmt::format("{}.obj", stage);
        const auto metrics = dir / fmt::format("{}.txt", stage);
        expect_ok(cli::cmd_reconstruct(c, ck, dir / "data.gfds", mesh, log), "reconstruct");
        expect_ok(cli::cmd_eval(c, mesh, metrics, ck, dir / "data.gfds", log), "eval");
        (std::strcmp(stage, "stage1") == 0 ? out.stage1 : out.final) = metrics_of(metrics).chamfer_l2_x10000;
    }
    return out;
}

Outcome
boundary_ablation(const fs::path& dir) {
    std::string detail;
    bool pass = true;
    for (double sigma : {0.005, 0.025}) {
        double mean_gain = 0.0;
        bool each_ok = true;
        detail += fmt::format("sigma {}:", sigma);
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const auto r = ablation_run(dir / fmt::format("s{}_{}", sigma, seed), sigma, seed);
            mean_gain += (r.stage1 - r.final) / 3.0;
            each_ok = each_ok && r.final <= r.stage1;
            detail += fmt::format(" [{:.4f} -> {:.4f}]", r.stage1, r.final);
        }
        detail += fmt::format(" mean gain {:.4f}; ", mean_gain);
        pass = pass && mean_gain > 0.0;
        if (sigma == 0.005) {
            pass = pass && each_ok;
        }
    }
    detail += "(L2-CD x1e4, stage 1 -> after boundary finetune)";
    return {pass, detail};
}

cli::ExperimentConfig
small_pipeline_config() {
    cli::ExperimentConfig c;
    c.data.n_points = 1500;
    c.data.n_queries = 20000;
    c.model.base_resolution = 16;
    c.model.channels = 8;
    c.model.decoder_hidden = 16;
    c.model.decoder_blocks = 2;
    c.train.stage1_steps = 200;
    c.train.stage2_steps = 20;
    c.train.stage1_lr = 3e-3;
    c.meshing.mise_initial_resolution = 16;
    c.eval.surface_samples = 20000;
    c.eval.iou_queries = 20000;
    return c;
}

Outcome
downsampling_plumbing(const fs::path& dir) {
    fs::create_directories(dir);
    {
        std::ofstream(dir / "config.json") << cli::dump_config(small_pipeline_config());
    }
    const std::string cfg = " --config " + (dir / "config.json").string();
    const auto data = (dir / "data.gfds").string();
    const auto run = dir / "run";
    std::vector<std::pair<std::string, int>> codes;
    codes.emplace_back("gen-data", run_tool("gen-data" + cfg + " --out " + data, dir / "gen.log"));
    codes.emplace_back("train", run_tool("train" + cfg + " --no-downsampling --data " + data + " --out " +
                                             run.string(),
                                         dir / "train.log"));
    codes.emplace_back("reconstruct", run_tool("reconstruct" + cfg + " --checkpoint " +
                                                   (run / "checkpoint-final.gfck").string() + " --data " + data +
                                                   " --out " + (dir / "mesh.obj").string(),
                                               dir / "reconstruct.log"));
    codes.emplace_back("eval", run_tool("eval" + cfg + " --mesh " + (dir / "mesh.obj").string() + " --checkpoint " +
                                            (run / "checkpoint-final.gfck").string() + " --data " + data +
                                            " --out " + (dir / "metrics.txt").string(),
                                        dir / "eval.log"));
    std::string detail;
    bool pass = true;
    for (const auto& [name, code] : codes) {
        detail += fmt::format("{} exit {}, ", name, code);
        pass = pass && code == 0;
    }
    if (!pass) {
        return {false, detail};
    }
    const auto stored = cli::load_config(run / "config.json");
    const auto m = metrics_of(dir / "metrics.txt");
    pass = !stored.model.enable_downsampling;
    detail += fmt::format("stored enable_downsampling={}, IoU {:.4f}, CD-L2x1e4 {:.4f}, NC {:.4f}, FS {:.4f}",
                          stored.model.enable_downsampling, m.iou, m.chamfer_l2_x10000, m.normal_consistency,
                          m.f_score_1pct);
    return {pass, detail};
}

Outcome
reproducibility(const fs::path& dir) {
    fs::create_directories(dir);
    {
        std::ofstream(dir / "config.json") << cli::dump_config(small_pipeline_config());
    }
    const std::string cfg = " --config " + (dir / "config.json").string();
    const std::vector<std::string> artifacts{"data.gfds",
                                             "run/config.json",
                                             "run/checkpoint-stage1.gfck",
                                             "run/checkpoint-final.gfck",
                                             "run/loss_trace.tsv",
                                             "mesh.obj",
                                             "metrics.txt"};
    for (const char* rep : {"a", "b"}) {
        const auto d = dir / rep;
        fs::create_directories(d);
        const auto data = (d / "data.gfds").string();
        const auto ck = (d / "run" / "checkpoint-final.gfck").string();
        const int codes[] = {
            run_tool("gen-data" + cfg + " --out " + data, d / "gen.log"),
            run_tool("train" + cfg + " --data " + data + " --out " + (d / "run").string(), d / "train.log"),
            run_tool("reconstruct" + cfg + " --checkpoint " + ck + " --data " + data + " --out " +
                         (d / "mesh.obj").string(),
                     d / "reconstruct.log"),
            run_tool("eval" + cfg + " --mesh " + (d / "mesh.obj").string() + " --checkpoint " + ck + " --data " +
                         data + " --out " + (d / "metrics.txt").string(),
                     d / "eval.log"),
        };
        for (int code : codes) {
            if (code != 0) {
                return {false, fmt::format("pipeline run {} failed with exit {}", rep, code)};
            }
        }
    }
    std::size_t identical = 0;
    std::string differing;
    for (const auto& a : artifacts) {
        if (gf::read_file_bytes(dir / "a" / a) == gf::read_file_bytes(dir / "b" / a)) {
            ++identical;
        } else {
            differing += " " + a;
        }
    }
    return {identical == artifacts.size(),
            fmt::format("{}/{} artifacts byte-identical across two runs{}", identical, artifacts.size(),
                        differing.empty() ? "" : ", differing:" + differing)};
}

} // namespace

int
main(int argc, char** argv) {
    const Scratch scratch;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient-suite", gradient_suite},
        {"attention-normalization", attention_normalization},
        {"encoder-permutation-invariance", permutation_invariance},
        {"interpolation-exactness", interpolation_exactness},
        {"boundary-extraction-oracle", boundary_oracle},
        {"mise-equals-dense", mise_equals_dense},
        {"marching-cubes-topology", marching_cubes_topology},
        {"toy-overfit", [&] { return toy_overfit(scratch.root / "toy"); }},
        {"boundary-optimization-ablation", [&] { return boundary_ablation(scratch.root / "ablation"); }},
        {"downsampling-ablation-plumbing", [&] { return downsampling_plumbing(scratch.root / "nodown"); }},
        {"metrics-oracle", metrics_oracle},
        {"reproducibility", [&] { return reproducibility(scratch.root / "repro"); }},
    };
    std::vector<std::string> only;
    std::ofstream report;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--report") == 0 && i + 1 < argc) {
            report.open(argv[++i]);
        } else {
            only.emplace_back(argv[i]);
        }
    }
    const auto emit = [&](const std::string& line) {
        fmt::print("{}\n", line);
        std::fflush(stdout);
        if (report.is_open()) {
            report << line << '\n' << std::flush;
        }
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) {
            continue;
        }
        Outcome out;
        const auto t0 = Clock::now();
        try {
            out = run();
        } catch (const std::exception& e) {
            out = {false, fmt::format("exception: {}", e.what())};
        }
        failures += !out.pass;
        emit(fmt::format("{} {}: {} [{:.1f} s]", out.pass ? "PASS" : "FAIL", name, out.detail, seconds_since(t0)));
    }
    emit(fmt::format("{} criteria failed", failures));
    return failures == 0 ? 0 : 1;
}
