// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
// The subcommands of the `gridformer` tool. Each returns a process exit
// code; library errors escape as exceptions and are mapped by run_guarded.
//
#pragma once

#include <gridformer_cli/config.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

namespace gridformer::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitEmptyBoundary = 4;
inline constexpr int kExitEmptyMesh = 5;
inline constexpr int kExitGradcheck = 6;

/// Writes the dataset container.
int cmd_gen_data(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& log);

/// Writes config.json, checkpoint-stage1.gfck, checkpoint-final.gfck and
/// loss_trace.tsv into out_dir.
int cmd_train(const ExperimentConfig& config, const std::filesystem::path& dataset,
              const std::filesystem::path& out_dir, std::ostream& log);

/// Encodes the dataset's cloud once and extracts the tau level set.
int cmd_reconstruct(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                    const std::filesystem::path& dataset, const std::filesystem::path& out_mesh,
                    std::ostream& log);

/// Metrics of a mesh against the configured analytic shape. With a
/// checkpoint and dataset, IoU thresholds the network's own occupancy;
/// otherwise it uses the mesh's inside test.
int cmd_eval(const ExperimentConfig& config, const std::filesystem::path& mesh,
             const std::filesystem::path& out, const std::optional<std::filesystem::path>& checkpoint,
             const std::optional<std::filesystem::path>& dataset, std::ostream& log);

struct GradcheckOptions {
    std::size_t trials = 100;
    std::uint64_t seed = 0;
    /// Test hook: perturbs the backward pass of this primitive.
    std::optional<std::string> corrupt;
};

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& log);

/// Runs body, translating exceptions into exit codes and a message on err.
int run_guarded(const std::function<int()>& body, std::ostream& err);

} // namespace gridformer::cli
