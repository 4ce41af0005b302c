// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage occupancy training: uniform queries with plain BCE, then
// boundary queries with the margin-shifted BCE at a much smaller rate.
//
#pragma once

#include <gridformer/adam.hpp>
#include <gridformer/fields.hpp>
#include <gridformer/model.hpp>
#include <gridformer/rng.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace gridformer {

struct TrainConfig {
    double stage1_lr = 1e-4;
    double stage2_lr = 1e-6;
    double margin = 2.0;
    double boundary_radius = 0.08;
    std::size_t batch_points = 2048;
    std::size_t stage1_steps = 1000;
    std::size_t stage2_steps = 200;
    std::uint64_t seed = 0;
    AdamConfig adam;
    /// Stop a stage early once the mean loss of the latest window improves
    /// on the previous window by less than `plateau_tolerance`.
    bool plateau_stop = false;
    std::size_t plateau_window = 100;
    double plateau_tolerance = 1e-5;
    /// Global gradient-norm clip; 0 disables it.
    double clip_norm = 0.0;
    /// Fraction of each stage-2 batch drawn from all queries instead of the
    /// boundary subset.
    double stage2_uniform_fraction = 0.0;

    void validate() const;
};

struct LossRecord {
    std::size_t step = 0;
    int stage = 1;
    double loss = 0.0;
    double lr = 0.0;
};

struct StageResult {
    std::vector<LossRecord> trace;
    bool plateaued = false;
};

/// sigma(logit - m (2 l - 1)).
double margin_probability(double logit, std::uint8_t label, double margin);

/// Mean clamped binary cross-entropy of probabilities against 0/1 labels.
double bce_loss(std::span<const double> probabilities, std::span<const std::uint8_t> labels);

/// Differentiable batch loss: encode the cloud, decode the queries, shift
/// by the margin (0 gives the plain loss), sigmoid, mean BCE.
Tensor occupancy_loss(Tape& tape, const ModelParams& params, std::span<const Vec3> points,
                      std::span<const Vec3> queries, std::span<const std::uint8_t> labels, double margin);

/// One optimizer step on a fixed batch; returns the loss before the update.
double train_step(ModelParams& params, OptimizerState& state, std::span<const Vec3> points,
                  std::span<const Vec3> queries, std::span<const std::uint8_t> labels, double margin, double lr,
                  const TrainConfig& cfg);

/// Stage 1: uniform queries, plain BCE, stage1_lr. Throws NumericError on
/// a non-finite loss.
StageResult train_stage1(ModelParams& params, const Dataset& data, const TrainConfig& cfg);

/// Stage 2: boundary-masked queries, margin BCE, stage2_lr, fresh Adam
/// moments. Throws ContractError when the boundary subset is empty.
StageResult train_stage2(ModelParams& params, const Dataset& data, const TrainConfig& cfg);

/// Query indices of each batch of a stage; exposed for inspection.
class BatchSampler {
public:
    BatchSampler(std::vector<std::size_t> pool, std::size_t batch, std::uint64_t seed, std::string_view stream);
    std::vector<std::size_t> next();

private:
    std::vector<std::size_t> pool_;
    std::size_t batch_;
    std::size_t cursor_;
    Rng rng_;
};

/// Tab-separated "step stage loss lr" lines.
void write_loss_trace(const std::filesystem::path& path, std::span<const LossRecord> trace);

} // namespace gridformer
