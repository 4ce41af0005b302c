// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/error.hpp>
#include <gridformer/training.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace gridformer {

void
TrainConfig::validate() const {
    if (!(stage1_lr > 0.0) || !(stage2_lr > 0.0)) {
        throw ContractError(fmt::format("learning rates must be positive (got {}, {})", stage1_lr, stage2_lr));
    }
    if (!(margin >= 0.0)) {
        throw ContractError(fmt::format("margin {} must be non-negative", margin));
    }
    if (!(boundary_radius > 0.0)) {
        throw ContractError(fmt::format("boundary_radius {} must be positive", boundary_radius));
    }
    if (batch_points == 0) {
        throw ContractError("batch_points must be positive");
    }
    if (plateau_stop && plateau_window == 0) {
        throw ContractError("plateau_window must be positive");
    }
    if (!(clip_norm >= 0.0)) {
        throw ContractError("clip_norm must be non-negative");
    }
    if (!(stage2_uniform_fraction >= 0.0 && stage2_uniform_fraction <= 1.0)) {
        throw ContractError(fmt::format("stage2_uniform_fraction {} outside [0, 1]", stage2_uniform_fraction));
    }
}

double
margin_probability(double logit, std::uint8_t label, double margin) {
    return occupancy_probability(logit - margin * (label * 2.0 - 1.0));
}

double
bce_loss(std::span<const double> probabilities, std::span<const std::uint8_t> labels) {
    Tape tape(false);
    const Tensor p = Tensor::from_values({probabilities.size()},
                                         std::vector<double>(probabilities.begin(), probabilities.end()));
    return ops::bce(tape, p, labels).item();
}

Tensor
occupancy_loss(Tape& tape, const ModelParams& params, std::span<const Vec3> points, std::span<const Vec3> queries,
               std::span<const std::uint8_t> labels, double margin) {
    const EncodedField field = encode(tape, points, params);
    const Tensor logits = decode(tape, field, queries, params);
    const Tensor shifted = ops::margin_shift(tape, logits, labels, margin);
    return ops::bce(tape, ops::sigmoid(tape, shifted), labels);
}

namespace {

std::vector<Tensor>
parameter_list(const ModelParams& params) {
    std::vector<Tensor> out;
    for (auto& [name, t] : params.named_parameters()) {
        out.push_back(t);
    }
    return out;
}

double
window_mean(const std::vector<LossRecord>& trace, std::size_t begin, std::size_t end) {
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
        acc += trace[i].loss;
    }
    return acc / static_cast<double>(end - begin);
}

bool
reached_plateau(const std::vector<LossRecord>& trace, const TrainConfig& cfg) {
    const std::size_t n = trace.size();
    const std::size_t w = cfg.plateau_window;
    if (!cfg.plateau_stop || n < 2 * w || n % w != 0) {
        return false;
    }
    const double previous = window_mean(trace, n - 2 * w, n - w);
    const double current = window_mean(trace, n - w, n);
    return previous - current < cfg.plateau_tolerance;
}

struct Batch {
    std::vector<Vec3> coords;
    std::vector<std::uint8_t> labels;
};

Batch
gather_batch(const QuerySet& qs, std::span<const std::size_t> indices) {
    Batch b;
    b.coords.reserve(indices.size());
    b.labels.reserve(indices.size());
    for (const auto i : indices) {
        b.coords.push_back(qs.coords[i]);
        b.labels.push_back(qs.label[i]);
    }
    return b;
}

std::vector<std::size_t>
all_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

void
check_dataset(const Dataset& data) {
    if (data.points.empty()) {
        throw ContractError("training needs a non-empty point cloud");
    }
    if (data.queries.size() == 0 || data.queries.label.size() != data.queries.size()) {
        throw ContractError("training needs labeled queries");
    }
}

} // namespace

BatchSampler::BatchSampler(std::vector<std::size_t> pool, std::size_t batch, std::uint64_t seed,
                           std::string_view stream)
    : pool_(std::move(pool)), batch_(std::min(batch, pool_.size())), cursor_(pool_.size()), rng_(seed, stream) {
    if (pool_.empty()) {
        throw ContractError("batch sampler over an empty index pool");
    }
}

std::vector<std::size_t>
BatchSampler::next() {
    if (cursor_ + batch_ > pool_.size()) {
        rng_.shuffle(std::span<std::size_t>(pool_));
        cursor_ = 0;
    }
    std::vector<std::size_t> out(pool_.begin() + static_cast<long>(cursor_),
                                 pool_.begin() + static_cast<long>(cursor_ + batch_));
    cursor_ += batch_;
    return out;
}

double
train_step(ModelParams& params, OptimizerState& state, std::span<const Vec3> points, std::span<const Vec3> queries,
           std::span<const std::uint8_t> labels, double margin, double lr, const TrainConfig& cfg) {
    params.zero_grad();
    Tape tape;
    Tensor loss = occupancy_loss(tape, params, points, queries, labels, margin);
    const double value = loss.item();
    if (!std::isfinite(value)) {
        throw NumericError(fmt::format("non-finite loss {} at optimizer step {}", value, state.step + 1));
    }
    tape.backward(loss);
    tape.clear();
    auto list = parameter_list(params);
    if (cfg.clip_norm > 0.0) {
        clip_gradient_norm(list, cfg.clip_norm);
    }
    adam_step(list, state, lr, cfg.adam);
    return value;
}

namespace {

StageResult
run_stage(ModelParams& params, const Dataset& data, const TrainConfig& cfg, int stage, std::size_t steps,
          double lr, double margin, BatchSampler& primary, BatchSampler* secondary, std::size_t secondary_count) {
    StageResult result;
    auto list = parameter_list(params);
    OptimizerState state = OptimizerState::for_parameters(list);
    for (std::size_t step = 0; step < steps; ++step) {
        auto indices = primary.next();
        if (secondary && secondary_count > 0) {
            indices.resize(indices.size() - std::min(indices.size(), secondary_count));
            const auto extra = secondary->next();
            indices.insert(indices.end(), extra.begin(), extra.begin() + static_cast<long>(secondary_count));
        }
        const Batch batch = gather_batch(data.queries, indices);
        double loss = 0.0;
        try {
            loss = train_step(params, state, data.points, batch.coords, batch.labels, margin, lr, cfg);
        } catch (const NumericError& e) {
            throw NumericError(fmt::format("stage {} step {}: {}", stage, step, e.what()));
        }
        result.trace.push_back({step, stage, loss, lr});
        if (reached_plateau(result.trace, cfg)) {
            result.plateaued = true;
            break;
        }
    }
    return result;
}

} // namespace

StageResult
train_stage1(ModelParams& params, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    check_dataset(data);
    BatchSampler sampler(all_indices(data.queries.size()), cfg.batch_points, cfg.seed, "train-stage1");
    return run_stage(params, data, cfg, 1, cfg.stage1_steps, cfg.stage1_lr, 0.0, sampler, nullptr, 0);
}

StageResult
train_stage2(ModelParams& params, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    check_dataset(data);
    const auto& mask = data.queries.boundary_mask;
    std::vector<std::size_t> boundary;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            boundary.push_back(i);
        }
    }
    if (boundary.empty() || mask.size() != data.queries.size()) {
        throw ContractError("stage 2 needs a non-empty boundary subset");
    }
    BatchSampler sampler(std::move(boundary), cfg.batch_points, cfg.seed, "train-stage2");
    const auto mixed = static_cast<std::size_t>(
        std::llround(cfg.stage2_uniform_fraction * static_cast<double>(std::min(cfg.batch_points, mask.size()))));
    if (mixed == 0) {
        return run_stage(params, data, cfg, 2, cfg.stage2_steps, cfg.stage2_lr, cfg.margin, sampler, nullptr, 0);
    }
    BatchSampler uniform(all_indices(data.queries.size()), mixed, cfg.seed, "train-stage2-uniform");
    return run_stage(params, data, cfg, 2, cfg.stage2_steps, cfg.stage2_lr, cfg.margin, sampler, &uniform, mixed);
}

void
write_loss_trace(const std::filesystem::path& path, std::span<const LossRecord> trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
    }
    out << "step\tstage\tloss\tlr\n";
    for (const auto& r : trace) {
        out << fmt::format("{}\t{}\t{:.17g}\t{:.17g}\n", r.step, r.stage, r.loss, r.lr);
    }
    if (!out) {
        throw IoError(fmt::format("failed writing '{}'", path.string()));
    }
}

} // namespace gridformer
