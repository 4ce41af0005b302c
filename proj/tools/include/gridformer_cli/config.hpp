// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: a JSON document with one object per section.
// Unknown keys anywhere are rejected.
//
#pragma once

#include <gridformer/fields.hpp>
#include <gridformer/metrics.hpp>
#include <gridformer/model.hpp>
#include <gridformer/shapes.hpp>
#include <gridformer/training.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace gridformer::cli {

/// Malformed or inconsistent configuration (exit code 1).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MeshingParams {
    double tau = 0.5;
    int mise_initial_resolution = 32;
    int mise_steps = 2;
    /// Sample the final lattice densely instead of refining.
    bool dense = false;
    std::size_t chunk = 4096;
};

struct Seeds {
    std::uint64_t data = 1;
    std::uint64_t model = 2;
    std::uint64_t train = 3;
    std::uint64_t eval = 4;
};

/// The scene used when a config omits `shape`: a sphere overlapping a box.
ShapeSpec default_scene();

struct ExperimentConfig {
    ShapeSpec shape = default_scene();
    DataParams data;
    ModelConfig model;
    TrainConfig train;
    /// When false training stops after stage 1 and the final checkpoint is
    /// the stage-1 checkpoint.
    bool boundary_optimization = true;
    MeshingParams meshing;
    EvalConfig eval;
    Seeds seeds;
    std::string output_dir = "run";

    /// Replaces every named seed.
    void set_all_seeds(std::uint64_t seed);

    /// Module parameters with the seeds, radius and tau threaded through.
    DataParams data_params() const;
    TrainConfig train_config() const;
    EvalConfig eval_config() const;

    void validate() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical JSON; parse_config(dump_config(c)) reproduces c exactly.
std::string dump_config(const ExperimentConfig& config);

} // namespace gridformer::cli
