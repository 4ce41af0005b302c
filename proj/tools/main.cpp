// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer_cli/commands.hpp>
#include <gridformer_cli/config.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

using gridformer::cli::ExperimentConfig;

struct ConfigFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config (JSON)");
        cmd->add_option("--seed", seed, "override every named seed");
    }

    ExperimentConfig load() const {
        ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : gridformer::cli::load_config(config_path);
        if (seed) {
            c.set_all_seeds(*seed);
        }
        return c;
    }
};

} // namespace

int
main(int argc, char** argv) {
    namespace cli = gridformer::cli;
    CLI::App app{"Point-grid transformer surface reconstruction"};
    app.require_subcommand(1);

    ConfigFlags gen_flags, train_flags, rec_flags, eval_flags;

    std::string gen_out;
    auto* gen = app.add_subcommand("gen-data", "sample a point cloud and labelled queries");
    gen_flags.attach(gen);
    gen->add_option("--out", gen_out, "dataset file")->required();

    std::string train_data, train_out;
    bool no_boundary = false, no_downsampling = false;
    auto* train = app.add_subcommand("train", "two-stage training");
    train_flags.attach(train);
    train->add_option("--data", train_data, "dataset file")->required();
    train->add_option("--out", train_out, "run directory (default: output_dir from the config)");
    train->add_flag("--no-boundary-opt", no_boundary, "stop after stage 1");
    train->add_flag("--no-downsampling", no_downsampling, "keep every layer at the base resolution");

    std::string rec_ckpt, rec_data, rec_out;
    bool dense = false;
    auto* rec = app.add_subcommand("reconstruct", "extract a mesh from a trained model");
    rec_flags.attach(rec);
    rec->add_option("--checkpoint", rec_ckpt, "checkpoint file")->required();
    rec->add_option("--data", rec_data, "dataset whose point cloud is encoded")->required();
    rec->add_option("--out", rec_out, "OBJ file")->required();
    rec->add_flag("--dense", dense, "sample the final lattice densely instead of MISE");

    std::string eval_mesh, eval_out, eval_ckpt, eval_data;
    auto* ev = app.add_subcommand("eval", "score a mesh against the analytic shape");
    eval_flags.attach(ev);
    ev->add_option("--mesh", eval_mesh, "OBJ file")->required();
    ev->add_option("--out", eval_out, "metrics file")->required();
    ev->add_option("--checkpoint", eval_ckpt, "use the network's occupancy for IoU");
    ev->add_option("--data", eval_data, "dataset paired with --checkpoint");

    cli::GradcheckOptions gc_opts;
    std::string corrupt;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
    gc->add_option("--trials", gc_opts.trials, "random instances per primitive");
    gc->add_option("--seed", gc_opts.seed, "instance seed");
    gc->add_option("--corrupt-backward", corrupt)->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : cli::kExitUsage;
    }

    return cli::run_guarded(
        [&]() -> int {
            if (*gen) {
                return cli::cmd_gen_data(gen_flags.load(), gen_out, std::cout);
            }
            if (*train) {
                ExperimentConfig c = train_flags.load();
                if (no_boundary) {
                    c.boundary_optimization = false;
                }
                if (no_downsampling) {
                    c.model.enable_downsampling = false;
                }
                c.validate();
                return cli::cmd_train(c, train_data, train_out.empty() ? c.output_dir : train_out, std::cout);
            }
            if (*rec) {
                ExperimentConfig c = rec_flags.load();
                if (dense) {
                    c.meshing.dense = true;
                }
                return cli::cmd_reconstruct(c, rec_ckpt, rec_data, rec_out, std::cout);
            }
            if (*ev) {
                std::optional<std::filesystem::path> ck, ds;
                if (!eval_ckpt.empty()) {
                    ck = eval_ckpt;
                }
                if (!eval_data.empty()) {
                    ds = eval_data;
                }
                return cli::cmd_eval(eval_flags.load(), eval_mesh, eval_out, ck, ds, std::cout);
            }
            if (!corrupt.empty()) {
                gc_opts.corrupt = corrupt;
            }
            return cli::cmd_gradcheck(gc_opts, std::cout);
        },
        std::cerr);
}
