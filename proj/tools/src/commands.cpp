// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer_cli/commands.hpp>

#include <gridformer/checkpoint.hpp>
#include <gridformer/dataset_io.hpp>
#include <gridformer/error.hpp>
#include <gridformer/gradcheck_suite.hpp>
#include <gridformer/mesh.hpp>
#include <gridformer/metrics.hpp>
#include <gridformer/tensor.hpp>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <system_error>

namespace gridformer::cli {

namespace fs = std::filesystem;

namespace {

// Thrown for conditions with their own exit code.
struct ExitRequest {
    int code;
    std::string message;
};

void
ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError(fmt::format("cannot create directory '{}': {}", dir.string(), ec.message()));
    }
}

void
ensure_parent(const fs::path& file) {
    if (file.has_parent_path()) {
        ensure_directory(file.parent_path());
    }
}

void
write_text(const fs::path& path, const std::string& text) {
    ensure_parent(path);
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

FieldFunction
network_field(const ModelParams& params, const EncodedField& field, std::size_t chunk) {
    return [&params, &field, chunk](std::span<const Vec3> q) {
        return predict_probabilities(field, q, params, chunk);
    };
}

} // namespace

int
cmd_gen_data(const ExperimentConfig& config, const fs::path& out, std::ostream& log) {
    const Dataset ds = make_dataset(config.shape, config.data_params());
    ensure_parent(out);
    write_dataset(out, ds);
    const auto boundary = std::count(ds.queries.boundary_mask.begin(), ds.queries.boundary_mask.end(), 1);
    const auto inside = std::count(ds.queries.label.begin(), ds.queries.label.end(), 1);
    fmt::print(log, "points = {}\nqueries = {}\ninside = {}\nboundary = {}\n", ds.points.size(), ds.queries.size(),
               inside, boundary);
    return kExitOk;
}

int
cmd_train(const ExperimentConfig& config, const fs::path& dataset, const fs::path& out_dir, std::ostream& log) {
    Dataset ds = read_dataset(dataset);
    const TrainConfig tc = config.train_config();
    ensure_directory(out_dir);
    write_text(out_dir / "config.json", dump_config(config));

    ModelParams params = ModelParams::initialize(config.model, config.seeds.model);
    fmt::print(log, "parameters = {}\n", params.parameter_count());

    StageResult s1 = train_stage1(params, ds, tc);
    write_checkpoint(out_dir / "checkpoint-stage1.gfck", params);
    std::vector<LossRecord> trace = s1.trace;
    if (!trace.empty()) {
        fmt::print(log, "stage1 steps = {} first loss = {:.6g} last loss = {:.6g}{}\n", trace.size(),
                   trace.front().loss, trace.back().loss, s1.plateaued ? " (plateau)" : "");
    }

    if (config.boundary_optimization) {
        BoundaryResult b = extract_boundary(ds.queries, tc.boundary_radius);
        if (b.boundary_count == 0) {
            write_loss_trace(out_dir / "loss_trace.tsv", trace);
            throw ExitRequest{kExitEmptyBoundary,
                              fmt::format("no query has an opposite-label neighbour within {}; stage 2 skipped",
                                          tc.boundary_radius)};
        }
        fmt::print(log, "boundary queries = {}\n", b.boundary_count);
        ds.queries = std::move(b.queries);
        StageResult s2 = train_stage2(params, ds, tc);
        if (!s2.trace.empty()) {
            fmt::print(log, "stage2 steps = {} first loss = {:.6g} last loss = {:.6g}\n", s2.trace.size(),
                       s2.trace.front().loss, s2.trace.back().loss);
        }
        trace.insert(trace.end(), s2.trace.begin(), s2.trace.end());
    }
    write_checkpoint(out_dir / "checkpoint-final.gfck", params);
    write_loss_trace(out_dir / "loss_trace.tsv", trace);
    return kExitOk;
}

int
cmd_reconstruct(const ExperimentConfig& config, const fs::path& checkpoint, const fs::path& dataset,
                const fs::path& out_mesh, std::ostream& log) {
    const ModelParams params = read_checkpoint(checkpoint);
    const Dataset ds = read_dataset(dataset);
    Tape tape(false);
    const EncodedField field = encode(tape, ds.points, params);
    const FieldFunction fn = network_field(params, field, config.meshing.chunk);

    const MiseOptions mo{config.meshing.mise_initial_resolution, config.meshing.mise_steps, config.meshing.tau};
    const int final_res = mo.initial_resolution << mo.steps;
    const MiseResult r = config.meshing.dense ? dense_extract(fn, final_res, mo.tau) : mise_extract(fn, mo);
    if (r.mesh.empty()) {
        throw ExitRequest{kExitEmptyMesh, fmt::format("empty mesh: the field never crosses tau = {} on the {}^3 "
                                                      "lattice",
                                                      mo.tau, final_res)};
    }
    ensure_parent(out_mesh);
    write_obj(out_mesh, r.mesh);
    fmt::print(log, "vertices = {}\ntriangles = {}\nevaluations = {}\n", r.mesh.vertices.size(),
               r.mesh.triangles.size(), r.evaluations);
    return kExitOk;
}

int
cmd_eval(const ExperimentConfig& config, const fs::path& mesh_path, const fs::path& out,
         const std::optional<fs::path>& checkpoint, const std::optional<fs::path>& dataset, std::ostream& log) {
    const Mesh mesh = read_obj(mesh_path);
    if (mesh.empty()) {
        throw ExitRequest{kExitEmptyMesh, fmt::format("mesh '{}' has no triangles", mesh_path.string())};
    }
    if (checkpoint.has_value() != dataset.has_value()) {
        throw ExitRequest{kExitUsage, "--checkpoint and --data must be given together"};
    }
    MetricsReport report;
    if (checkpoint) {
        const ModelParams params = read_checkpoint(*checkpoint);
        const Dataset ds = read_dataset(*dataset);
        Tape tape(false);
        const EncodedField field = encode(tape, ds.points, params);
        const std::size_t chunk = config.meshing.chunk;
        report = evaluate_reconstruction(mesh, config.shape, config.eval_config(),
                                         [&](std::span<const Vec3> q) {
                                             return predict_probabilities(field, q, params, chunk);
                                         });
    } else {
        report = evaluate_reconstruction(mesh, config.shape, config.eval_config());
    }
    write_metrics(out, report);
    log << format_metrics(report);
    return kExitOk;
}

int
cmd_gradcheck(const GradcheckOptions& options, std::ostream& log) {
    if (options.corrupt) {
        testing::corrupt_backward(*options.corrupt);
    }
    std::vector<GradcheckEntry> entries = primitive_gradchecks(options.trials, options.seed);
    const auto model = model_gradchecks(options.seed);
    entries.insert(entries.end(), model.begin(), model.end());
    testing::clear_backward_corruption();

    fmt::print(log, "{:<32} {:>12} {:>10} {:>8}  {}\n", "check", "max_rel_err", "tolerance", "coords", "status");
    const GradcheckEntry* worst = nullptr;
    std::vector<std::string> failed;
    for (const auto& e : entries) {
        fmt::print(log, "{:<32} {:>12.3e} {:>10.0e} {:>8}  {}\n", e.name, e.max_rel_err, e.tolerance, e.coordinates,
                   e.passed() ? "ok" : "FAIL");
        if (!e.passed()) {
            failed.push_back(e.name);
        }
        if (!worst || e.max_rel_err / e.tolerance > worst->max_rel_err / worst->tolerance) {
            worst = &e;
        }
    }
    if (worst) {
        fmt::print(log, "worst: {} rel err {:.3e} at {}[{}] (analytic {:.9g}, numeric {:.9g})\n", worst->name,
                   worst->max_rel_err, worst->worst_input, worst->worst_index, worst->worst_analytic,
                   worst->worst_numeric);
    }
    if (!failed.empty()) {
        fmt::print(log, "FAILED: {}\n", fmt::join(failed, ", "));
        return kExitGradcheck;
    }
    fmt::print(log, "all {} checks passed\n", entries.size());
    return kExitOk;
}

int
run_guarded(const std::function<int()>& body, std::ostream& err) {
    try {
        return body();
    } catch (const ExitRequest& e) {
        fmt::print(err, "error: {}\n", e.message);
        return e.code;
    } catch (const ConfigError& e) {
        fmt::print(err, "config error: {}\n", e.what());
        return kExitUsage;
    } catch (const IoError& e) {
        fmt::print(err, "{}\n", e.what());
        return kExitIo;
    } catch (const NumericError& e) {
        fmt::print(err, "{}\n", e.what());
        return kExitNumeric;
    } catch (const Error& e) {
        fmt::print(err, "{}\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitUsage;
    }
}

} // namespace gridformer::cli
