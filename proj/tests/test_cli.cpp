// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer_cli/commands.hpp>
#include <gridformer_cli/config.hpp>

#include <gridformer/checkpoint.hpp>
#include <gridformer/dataset_io.hpp>
#include <gridformer/error.hpp>
#include <gridformer/mesh.hpp>
#include <gridformer/metrics.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace gf = gridformer;
namespace cli = gridformer::cli;
namespace fs = std::filesystem;

namespace {

// Small enough that a full train takes a second or two.
cli::ExperimentConfig
quick_config() {
    cli::ExperimentConfig c;
    c.shape = gf::ShapeSpec::sphere({0.5, 0.5, 0.5}, 0.3);
    c.data.n_points = 400;
    c.data.n_queries = 4000;
    c.model.base_resolution = 8;
    c.model.channels = 4;
    c.model.decoder_hidden = 8;
    c.model.decoder_blocks = 2;
    c.train.stage1_steps = 30;
    c.train.stage2_steps = 5;
    c.train.batch_points = 256;
    c.train.stage1_lr = 3e-3;
    c.meshing.mise_initial_resolution = 8;
    c.meshing.mise_steps = 2;
    c.eval.surface_samples = 5000;
    c.eval.iou_queries = 5000;
    return c;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("gridformer_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path dir_;
    std::ostringstream log_;
};

std::vector<std::uint8_t>
bytes_of(const fs::path& p) {
    return gf::read_file_bytes(p);
}

int
run_tool(const std::string& args) {
    const std::string cmd = std::string(GRIDFORMER_TOOL_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Config, DefaultsMatchDocumentedValues) {
    const cli::ExperimentConfig c;
    EXPECT_EQ(c.data.n_points, 3000u);
    EXPECT_EQ(c.data.sigma, 0.005);
    EXPECT_EQ(c.data.n_queries, 100000u);
    EXPECT_EQ(c.meshing.tau, 0.5);
    EXPECT_EQ(c.meshing.mise_initial_resolution, 32);
    EXPECT_EQ(c.meshing.mise_steps, 2);
    EXPECT_TRUE(c.shape.is_union());
    EXPECT_TRUE(c.boundary_optimization);
}

TEST(Config, DumpParseRoundTrip) {
    auto c = quick_config();
    c.shape = gf::ShapeSpec::unite({gf::ShapeSpec::torus({0.5, 0.5, 0.5}, 0.2, 0.05),
                                    gf::ShapeSpec::box({0.5, 0.5, 0.7}, {0.1, 0.2, 0.05})});
    c.model.attention = gf::AttentionKind::Scalar;
    c.model.combine = gf::FeatureCombine::Concat;
    c.train.adam.eps = 1.25e-9;
    c.train.stage1_lr = 0.1 + 0.2; // not exactly representable in short decimal
    c.seeds = {11, 12, 13, 18446744073709551615ull};
    c.output_dir = "runs/x";
    const auto text = cli::dump_config(c);
    const auto back = cli::parse_config(text);
    EXPECT_EQ(cli::dump_config(back), text);
    EXPECT_EQ(back.train.stage1_lr, c.train.stage1_lr);
    EXPECT_EQ(back.seeds.eval, c.seeds.eval);
    EXPECT_EQ(back.model, c.model);
}

TEST(Config, UnknownKeysAndBadTypesAreErrors) {
    EXPECT_THROW(cli::parse_config(R"({"modle": {}})"), cli::ConfigError);
    EXPECT_THROW(cli::parse_config(R"({"model": {"chanels": 8}})"), cli::ConfigError);
    EXPECT_THROW(cli::parse_config(R"({"shape": {"kind": "sphere", "center": [0.5,0.5,0.5], "radius": 0.2, "r": 1}})"),
                 cli::ConfigError);
    EXPECT_THROW(cli::parse_config(R"({"model": {"channels": -3}})"), cli::ConfigError);
    EXPECT_THROW(cli::parse_config(R"({"model": {"channels": 2.5}})"), cli::ConfigError);
    EXPECT_THROW(cli::parse_config(R"({"model": {"attention": "cosine"}})"), cli::ConfigError);
    EXPECT_THROW(cli::parse_config(R"({"model": {"base_resolution": 30}})"), cli::ConfigError);
    EXPECT_THROW(cli::parse_config("{not json"), cli::ConfigError);
    EXPECT_NO_THROW(cli::parse_config("{}"));
}

TEST(Config, SeedOverrideReachesEveryModule) {
    auto c = quick_config();
    c.set_all_seeds(77);
    EXPECT_EQ(c.data_params().seed, 77u);
    EXPECT_EQ(c.train_config().seed, 77u);
    EXPECT_EQ(c.eval_config().seed, 77u);
    EXPECT_EQ(c.seeds.model, 77u);
}

TEST(ExitCodes, ExceptionMapping) {
    std::ostringstream err;
    EXPECT_EQ(cli::run_guarded([] { return 0; }, err), cli::kExitOk);
    EXPECT_EQ(cli::run_guarded([]() -> int { throw gf::IoError("x"); }, err), cli::kExitIo);
    EXPECT_EQ(cli::run_guarded([]() -> int { throw gf::NumericError("x"); }, err), cli::kExitNumeric);
    EXPECT_EQ(cli::run_guarded([]() -> int { throw cli::ConfigError("x"); }, err), cli::kExitUsage);
    EXPECT_EQ(cli::run_guarded([]() -> int { throw gf::ContractError("x"); }, err), cli::kExitUsage);
    EXPECT_NE(err.str().find("io error: x"), std::string::npos);
}

TEST_F(CliTest, GenDataDefaultCountsAndDeterminism) {
    const cli::ExperimentConfig c;
    ASSERT_EQ(cli::cmd_gen_data(c, dir_ / "a.gfds", log_), 0);
    ASSERT_EQ(cli::cmd_gen_data(c, dir_ / "b.gfds", log_), 0);
    EXPECT_EQ(bytes_of(dir_ / "a.gfds"), bytes_of(dir_ / "b.gfds"));
    const auto ds = gf::read_dataset(dir_ / "a.gfds");
    EXPECT_EQ(ds.points.size(), 3000u);
    EXPECT_EQ(ds.queries.size(), 100000u);
    EXPECT_EQ(gf::encode_dataset(ds), bytes_of(dir_ / "a.gfds"));
    EXPECT_NE(log_.str().find("points = 3000"), std::string::npos);
}

TEST_F(CliTest, TrainIsDeterministicAndWritesRunDirectory) {
    const auto c = quick_config();
    ASSERT_EQ(cli::cmd_gen_data(c, dir_ / "d.gfds", log_), 0);
    ASSERT_EQ(cli::cmd_train(c, dir_ / "d.gfds", dir_ / "r1", log_), 0);
    ASSERT_EQ(cli::cmd_train(c, dir_ / "d.gfds", dir_ / "r2", log_), 0);
    for (const char* f : {"config.json", "checkpoint-stage1.gfck", "checkpoint-final.gfck", "loss_trace.tsv"}) {
        ASSERT_TRUE(fs::exists(dir_ / "r1" / f)) << f;
        EXPECT_EQ(bytes_of(dir_ / "r1" / f), bytes_of(dir_ / "r2" / f)) << f;
    }
    EXPECT_NE(bytes_of(dir_ / "r1" / "checkpoint-stage1.gfck"), bytes_of(dir_ / "r1" / "checkpoint-final.gfck"));
    // The stored config reproduces the run on its own.
    const auto stored = cli::load_config(dir_ / "r1" / "config.json");
    EXPECT_EQ(cli::dump_config(stored), cli::dump_config(c));

    std::ifstream trace(dir_ / "r1" / "loss_trace.tsv");
    std::string line;
    std::getline(trace, line);
    std::vector<double> stage1;
    std::size_t stage2 = 0;
    while (std::getline(trace, line)) {
        std::istringstream ss(line);
        std::size_t step;
        int stage;
        double loss, lr;
        ss >> step >> stage >> loss >> lr;
        if (stage == 1) {
            stage1.push_back(loss);
        } else {
            ++stage2;
        }
    }
    ASSERT_EQ(stage1.size(), 30u);
    EXPECT_EQ(stage2, 5u);
    EXPECT_LT(stage1.back(), stage1.front());
}

TEST_F(CliTest, NoBoundaryOptKeepsStageOneCheckpoint) {
    auto c = quick_config();
    c.boundary_optimization = false;
    ASSERT_EQ(cli::cmd_gen_data(c, dir_ / "d.gfds", log_), 0);
    ASSERT_EQ(cli::cmd_train(c, dir_ / "d.gfds", dir_ / "r", log_), 0);
    EXPECT_EQ(bytes_of(dir_ / "r" / "checkpoint-stage1.gfck"), bytes_of(dir_ / "r" / "checkpoint-final.gfck"));
}

TEST_F(CliTest, ReconstructDenseEqualsMiseAndEvalIsStable) {
    auto c = quick_config();
    c.train.stage1_steps = 120;
    c.boundary_optimization = false;
    ASSERT_EQ(cli::cmd_gen_data(c, dir_ / "d.gfds", log_), 0);
    ASSERT_EQ(cli::cmd_train(c, dir_ / "d.gfds", dir_ / "r", log_), 0);
    const auto ck = dir_ / "r" / "checkpoint-final.gfck";
    ASSERT_EQ(cli::cmd_reconstruct(c, ck, dir_ / "d.gfds", dir_ / "mise.obj", log_), 0);
    auto dense_cfg = c;
    dense_cfg.meshing.dense = true;
    ASSERT_EQ(cli::cmd_reconstruct(dense_cfg, ck, dir_ / "d.gfds", dir_ / "dense.obj", log_), 0);

    const auto a = gf::read_obj(dir_ / "mise.obj");
    const auto b = gf::read_obj(dir_ / "dense.obj");
    ASSERT_FALSE(a.empty());
    ASSERT_EQ(a.vertices.size(), b.vertices.size());
    ASSERT_EQ(a.triangles.size(), b.triangles.size());
    auto va = a.vertices, vb = b.vertices;
    std::sort(va.begin(), va.end());
    std::sort(vb.begin(), vb.end());
    for (std::size_t i = 0; i < va.size(); ++i) {
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_NEAR(va[i][k], vb[i][k], 1e-9);
        }
    }

    ASSERT_EQ(cli::cmd_eval(c, dir_ / "mise.obj", dir_ / "m1.txt", ck, dir_ / "d.gfds", log_), 0);
    ASSERT_EQ(cli::cmd_eval(c, dir_ / "mise.obj", dir_ / "m2.txt", ck, dir_ / "d.gfds", log_), 0);
    EXPECT_EQ(bytes_of(dir_ / "m1.txt"), bytes_of(dir_ / "m2.txt"));
    const auto text = bytes_of(dir_ / "m1.txt");
    const std::string s(text.begin(), text.end());
    for (const char* key : {"iou", "chamfer_l1_x100", "chamfer_l2_x10000", "normal_consistency", "f_score_1pct"}) {
        EXPECT_NE(s.find(std::string(key) + " = "), std::string::npos) << key;
    }
}

TEST_F(CliTest, EvalOfAnalyticSelfReconstruction) {
    const cli::ExperimentConfig c;
    const gf::FieldFunction field = [&](std::span<const gf::Vec3> q) {
        std::vector<double> out(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) {
            out[i] = 1.0 / (1.0 + std::exp(200.0 * c.shape.signed_distance(q[i])));
        }
        return out;
    };
    gf::write_obj(dir_ / "self.obj", gf::dense_extract(field, 128).mesh);
    ASSERT_EQ(cli::cmd_eval(c, dir_ / "self.obj", dir_ / "m.txt", std::nullopt, std::nullopt, log_), 0);
    const auto bytes = bytes_of(dir_ / "m.txt");
    const auto r = gf::parse_metrics(std::string(bytes.begin(), bytes.end()));
    EXPECT_GT(r.iou, 0.99);
}

TEST_F(CliTest, ToolExitCodes) {
    const auto cfg_path = dir_ / "quick.json";
    {
        auto c = quick_config();
        c.train.stage1_steps = 2;
        std::ofstream(cfg_path) << cli::dump_config(c);
    }
    const std::string cfg = " --config " + cfg_path.string();
    const std::string data = (dir_ / "d.gfds").string();
    EXPECT_EQ(run_tool("gen-data" + cfg + " --out " + data), 0);
    EXPECT_EQ(run_tool("gen-data --config " + (dir_ / "missing.json").string() + " --out " + data), 2);
    EXPECT_EQ(run_tool("train" + cfg + " --data " + (dir_ / "missing.gfds").string() + " --out " +
                       (dir_ / "x").string()),
              2);
    EXPECT_EQ(run_tool("train" + cfg + " --data " + data + " --out " + (dir_ / "r").string()), 0);
    // An untrained decoder outputs 0.5 everywhere: no crossing of tau.
    {
        auto c = quick_config();
        c.train.stage1_steps = 0;
        c.boundary_optimization = false;
        std::ofstream(dir_ / "untrained.json") << cli::dump_config(c);
    }
    EXPECT_EQ(run_tool("train --config " + (dir_ / "untrained.json").string() + " --data " + data + " --out " +
                       (dir_ / "u").string()),
              0);
    EXPECT_EQ(run_tool("reconstruct" + cfg + " --checkpoint " + (dir_ / "u" / "checkpoint-final.gfck").string() +
                       " --data " + data + " --out " + (dir_ / "u.obj").string()),
              5);
    // No opposite-label pair within a tiny radius.
    {
        auto c = quick_config();
        c.train.stage1_steps = 1;
        c.train.boundary_radius = 1e-9;
        std::ofstream(dir_ / "tiny_radius.json") << cli::dump_config(c);
    }
    EXPECT_EQ(run_tool("train --config " + (dir_ / "tiny_radius.json").string() + " --data " + data + " --out " +
                       (dir_ / "t").string()),
              4);
    {
        std::ofstream(dir_ / "typo.json") << R"({"trian": {}})";
    }
    EXPECT_EQ(run_tool("gen-data --config " + (dir_ / "typo.json").string() + " --out " + data), 1);
    EXPECT_EQ(run_tool("no-such-command"), 1);
}

TEST(GradcheckCommand, PassesAndNegativeControlFails) {
    EXPECT_EQ(run_tool("gradcheck --trials 5"), 0);
    EXPECT_EQ(run_tool("gradcheck --trials 5 --corrupt-backward group_softmax"), 6);
    std::ostringstream log;
    cli::GradcheckOptions opts;
    opts.trials = 3;
    EXPECT_EQ(cli::cmd_gradcheck(opts, log), 0);
    for (const char* name : {"linear", "group_softmax", "conv3(full)", "grid_interpolate", "model loss (stage 1)"}) {
        EXPECT_NE(log.str().find(name), std::string::npos) << name;
    }
    EXPECT_NE(log.str().find("worst: "), std::string::npos);
    opts.corrupt = "scatter_reduce";
    std::ostringstream bad;
    EXPECT_EQ(cli::cmd_gradcheck(opts, bad), cli::kExitGradcheck);
    EXPECT_NE(bad.str().find("FAILED: scatter_reduce"), std::string::npos);
}
