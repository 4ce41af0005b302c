// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/gradcheck.hpp>
#include <gridformer/gradcheck_suite.hpp>
#include <gridformer/model.hpp>
#include <gridformer/rng.hpp>
#include <gridformer/training.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <functional>
#include <map>

namespace gridformer {

namespace {

// Values bounded away from zero so no relu kink sits within a probe step.
Tensor
random_tensor(Rng& rng, Shape shape, double lo = 0.1, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.values()) {
        const double m = rng.uniform(lo, hi);
        v = rng.uniform() < 0.5 ? -m : m;
    }
    return t;
}

Tensor
positive_tensor(Rng& rng, Shape shape, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.values()) {
        v = rng.uniform(lo, hi);
    }
    return t;
}

std::size_t
pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + rng.below(hi - lo + 1);
}

std::vector<Vec3>
random_points(Rng& rng, std::size_t n) {
    std::vector<Vec3> p(n);
    for (auto& v : p) {
        v = {rng.uniform(), rng.uniform(), rng.uniform()};
    }
    return p;
}

std::vector<std::size_t>
random_ids(Rng& rng, std::size_t n, std::size_t range) {
    std::vector<std::size_t> ids(n);
    for (auto& i : ids) {
        i = rng.below(range);
    }
    return ids;
}

std::vector<std::uint8_t>
random_labels(Rng& rng, std::size_t n) {
    std::vector<std::uint8_t> l(n);
    for (auto& v : l) {
        v = static_cast<std::uint8_t>(rng.below(2));
    }
    return l;
}

// Contracts an output against fixed random weights so every output entry
// carries a distinct gradient.
Tensor
contract(Tape& tape, const Tensor& y, const Tensor& weights) {
    return ops::sum(tape, ops::mul(tape, y, weights));
}

Tensor
constant_like(Rng& rng, const Shape& shape) {
    Tensor t = Tensor::zeros(shape);
    for (auto& v : t.values()) {
        v = rng.uniform(-1.0, 1.0);
    }
    return t;
}

void
record(GradcheckEntry& entry, const GradcheckResult& r, const std::string& where) {
    entry.coordinates += r.coordinates_checked;
    if (r.max_rel_err >= entry.max_rel_err) {
        entry.max_rel_err = r.max_rel_err;
        entry.worst_input = where;
        entry.worst_index = r.worst_index;
        entry.worst_analytic = r.worst_analytic;
        entry.worst_numeric = r.worst_numeric;
    }
}

struct Instance {
    std::vector<Tensor> inputs;
    std::function<Tensor(Tape&)> fn;
    /// Overrides the suite step; the log terms of bce need a finer probe.
    double step = 0.0;
};

using Builder = std::function<Instance(Rng&)>;

std::vector<std::pair<std::string, Builder>>
primitive_builders() {
    std::vector<std::pair<std::string, Builder>> b;
    b.emplace_back("linear", [](Rng& rng) {
        const auto n = pick(rng, 1, 5), ci = pick(rng, 1, 5), co = pick(rng, 1, 5);
        Instance in{{random_tensor(rng, {n, ci}), random_tensor(rng, {ci, co}), random_tensor(rng, {co})}, {}};
        const Tensor w = constant_like(rng, {n, co});
        in.fn = [x = in.inputs[0], W = in.inputs[1], bias = in.inputs[2], w](Tape& t) {
            return contract(t, ops::linear(t, x, W, bias), w);
        };
        return in;
    });
    for (const auto kind : {Pointwise::Relu, Pointwise::Sigmoid}) {
        b.emplace_back(kind == Pointwise::Relu ? "relu" : "sigmoid", [kind](Rng& rng) {
            const Shape s{pick(rng, 1, 6), pick(rng, 1, 4)};
            Instance in{{random_tensor(rng, s, 0.1, 3.0)}, {}};
            const Tensor w = constant_like(rng, s);
            in.fn = [x = in.inputs[0], w, kind](Tape& t) { return contract(t, ops::pointwise(t, x, kind), w); };
            return in;
        });
    }
    for (const auto& name : {std::string("add"), std::string("sub"), std::string("mul")}) {
        b.emplace_back(name, [name](Rng& rng) {
            const Shape s{pick(rng, 1, 6), pick(rng, 1, 4)};
            Instance in{{random_tensor(rng, s), random_tensor(rng, s)}, {}};
            in.fn = [a = in.inputs[0], c = in.inputs[1], name](Tape& t) {
                const Tensor y = name == "add" ? ops::add(t, a, c) : name == "sub" ? ops::sub(t, a, c) : ops::mul(t, a, c);
                return ops::sum(t, ops::mul(t, y, y));
            };
            return in;
        });
    }
    b.emplace_back("gather_rows", [](Rng& rng) {
        const auto n = pick(rng, 1, 5), c = pick(rng, 1, 4), m = pick(rng, 1, 8);
        Instance in{{random_tensor(rng, {n, c})}, {}};
        const auto rows = random_ids(rng, m, n);
        const Tensor w = constant_like(rng, {m, c});
        in.fn = [x = in.inputs[0], rows, w](Tape& t) { return contract(t, ops::gather_rows(t, x, rows), w); };
        return in;
    });
    b.emplace_back("broadcast_cols", [](Rng& rng) {
        const auto n = pick(rng, 1, 5), c = pick(rng, 1, 5);
        Instance in{{random_tensor(rng, {n, 1})}, {}};
        const Tensor w = constant_like(rng, {n, c});
        in.fn = [x = in.inputs[0], c, w](Tape& t) { return contract(t, ops::broadcast_cols(t, x, c), w); };
        return in;
    });
    b.emplace_back("concat_cols", [](Rng& rng) {
        const auto n = pick(rng, 1, 5), c1 = pick(rng, 1, 3), c2 = pick(rng, 1, 3);
        Instance in{{random_tensor(rng, {n, c1}), random_tensor(rng, {n, c2})}, {}};
        const Tensor w = constant_like(rng, {n, c1 + c2});
        in.fn = [parts = in.inputs, w](Tape& t) { return contract(t, ops::concat_cols(t, parts), w); };
        return in;
    });
    b.emplace_back("group_softmax", [](Rng& rng) {
        const auto n = pick(rng, 1, 8), c = pick(rng, 1, 4);
        Instance in{{random_tensor(rng, {n, c}, 0.0, 2.0)}, {}};
        const auto groups = random_ids(rng, n, pick(rng, 1, 3));
        const Tensor w = constant_like(rng, {n, c});
        in.fn = [x = in.inputs[0], groups, w](Tape& t) { return contract(t, ops::group_softmax(t, x, groups), w); };
        return in;
    });
    for (const auto mode : {ReduceMode::Mean, ReduceMode::Sum}) {
        b.emplace_back(mode == ReduceMode::Mean ? "scatter_reduce(mean)" : "scatter_reduce(sum)",
                       [mode](Rng& rng) {
                           const auto n = pick(rng, 1, 10), c = pick(rng, 1, 4), cells = pick(rng, 1, 5);
                           Instance in{{random_tensor(rng, {n, c})}, {}};
                           const auto ids = random_ids(rng, n, cells);
                           const Tensor w = constant_like(rng, {cells, c});
                           in.fn = [x = in.inputs[0], ids, cells, w, mode](Tape& t) {
                               return contract(t, ops::scatter_reduce(t, x, ids, cells, mode), w);
                           };
                           return in;
                       });
    }
    b.emplace_back("grid_interpolate", [](Rng& rng) {
        const int res = static_cast<int>(pick(rng, 1, 4));
        const auto c = pick(rng, 1, 3), m = pick(rng, 1, 6);
        const auto cells = static_cast<std::size_t>(res * res * res);
        Instance in{{random_tensor(rng, {cells, c})}, {}};
        const auto pts = random_points(rng, m);
        const Tensor w = constant_like(rng, {m, c});
        in.fn = [g = in.inputs[0], res, pts, w](Tape& t) {
            return contract(t, ops::grid_interpolate(t, FeatureGrid{res, g, nullptr}, pts), w);
        };
        return in;
    });
    for (const auto mode : {ConvMode::Full, ConvMode::Depthwise}) {
        b.emplace_back(mode == ConvMode::Full ? "conv3(full)" : "conv3(depthwise)", [mode](Rng& rng) {
            const int res = static_cast<int>(pick(rng, 1, 4));
            const auto ci = pick(rng, 1, 3);
            const auto co = mode == ConvMode::Full ? pick(rng, 1, 3) : ci;
            const auto cells = static_cast<std::size_t>(res * res * res);
            Tensor kernel = mode == ConvMode::Full ? random_tensor(rng, {27, ci, co}) : random_tensor(rng, {27, ci});
            Instance in{{random_tensor(rng, {cells, ci}), kernel}, {}};
            const Tensor w = constant_like(rng, {cells, co});
            in.fn = [g = in.inputs[0], k = in.inputs[1], res, w, mode](Tape& t) {
                return contract(t, ops::conv3(t, FeatureGrid{res, g, nullptr}, k, mode).features, w);
            };
            return in;
        });
    }
    b.emplace_back("conv3_at", [](Rng& rng) {
        const int res = static_cast<int>(pick(rng, 1, 4));
        const auto ci = pick(rng, 1, 3), co = pick(rng, 1, 3), m = pick(rng, 1, 5);
        const auto cells = static_cast<std::size_t>(res * res * res);
        Instance in{{random_tensor(rng, {cells, ci}), random_tensor(rng, {27, ci, co})}, {}};
        const auto where = random_ids(rng, m, cells);
        const Tensor w = constant_like(rng, {m, co});
        in.fn = [g = in.inputs[0], k = in.inputs[1], res, where, w](Tape& t) {
            return contract(t, ops::conv3_at(t, FeatureGrid{res, g, nullptr}, k, ConvMode::Full, where), w);
        };
        return in;
    });
    for (const auto factor : {ResampleFactor::Down2, ResampleFactor::Up2}) {
        b.emplace_back(factor == ResampleFactor::Down2 ? "resample_grid(down2)" : "resample_grid(up2)",
                       [factor](Rng& rng) {
                           const int res = static_cast<int>(factor == ResampleFactor::Down2 ? 2 * pick(rng, 1, 2)
                                                                                            : pick(rng, 1, 2));
                           const auto c = pick(rng, 1, 3);
                           const int out_res = factor == ResampleFactor::Down2 ? res / 2 : res * 2;
                           Instance in{{random_tensor(rng, {static_cast<std::size_t>(res * res * res), c})}, {}};
                           const Tensor w = constant_like(rng, {static_cast<std::size_t>(out_res * out_res * out_res), c});
                           in.fn = [g = in.inputs[0], res, w, factor](Tape& t) {
                               return contract(t, ops::resample_grid(t, FeatureGrid{res, g, nullptr}, factor).features, w);
                           };
                           return in;
                       });
    }
    b.emplace_back("sum", [](Rng& rng) {
        Instance in{{random_tensor(rng, {pick(rng, 1, 6), pick(rng, 1, 3)})}, {}};
        in.fn = [x = in.inputs[0]](Tape& t) { return ops::sum(t, x); };
        return in;
    });
    b.emplace_back("mean", [](Rng& rng) {
        Instance in{{random_tensor(rng, {pick(rng, 1, 6), pick(rng, 1, 3)})}, {}};
        in.fn = [x = in.inputs[0]](Tape& t) { return ops::mean(t, x); };
        return in;
    });
    b.emplace_back("margin_shift", [](Rng& rng) {
        const auto m = pick(rng, 1, 6);
        Instance in{{random_tensor(rng, {m, 1}, 0.1, 3.0)}, {}};
        const auto labels = random_labels(rng, m);
        const Tensor w = constant_like(rng, {m, 1});
        const double margin = rng.uniform(0.0, 3.0);
        in.fn = [x = in.inputs[0], labels, w, margin](Tape& t) {
            return contract(t, ops::margin_shift(t, x, labels, margin), w);
        };
        return in;
    });
    b.emplace_back("bce", [](Rng& rng) {
        const auto m = pick(rng, 1, 6);
        Instance in{{positive_tensor(rng, {m, 1}, 0.05, 0.95)}, {}};
        const auto labels = random_labels(rng, m);
        in.fn = [p = in.inputs[0], labels](Tape& t) { return ops::bce(t, p, labels); };
        in.step = 1e-5;
        return in;
    });
    return b;
}

} // namespace

std::vector<GradcheckEntry>
primitive_gradchecks(std::size_t trials, std::uint64_t seed, double step) {
    std::vector<GradcheckEntry> out;
    for (const auto& [name, build] : primitive_builders()) {
        GradcheckEntry entry;
        entry.name = name;
        entry.tolerance = kPrimitiveTolerance;
        Rng rng(seed, "gradcheck/" + name);
        for (std::size_t trial = 0; trial < trials; ++trial) {
            Instance inst = build(rng);
            const double h = inst.step > 0.0 ? inst.step : step;
            const auto r = gradcheck(inst.fn, inst.inputs, GradcheckOptions{h, 1e-8, 0});
            record(entry, r, fmt::format("trial {} input {}", trial, r.worst_input));
        }
        out.push_back(entry);
    }
    return out;
}

std::vector<GradcheckEntry>
model_gradchecks(std::uint64_t seed, double step) {
    ModelConfig cfg;
    cfg.base_resolution = 4;
    cfg.channels = 3;
    cfg.decoder_hidden = 4;
    cfg.decoder_blocks = 2;
    ModelParams params = ModelParams::initialize(cfg, seed);
    // Zero-initialized layers would hide most gradients; randomize them.
    Rng rng(seed, "gradcheck/model");
    for (auto& [name, t] : params.named_parameters()) {
        if (std::all_of(t.values().begin(), t.values().end(), [](double v) { return v == 0.0; })) {
            for (auto& v : t.values()) {
                v = rng.uniform(-0.5, 0.5);
            }
        }
    }
    const auto points = random_points(rng, 5);
    const auto queries = random_points(rng, 6);
    const auto labels = random_labels(rng, queries.size());

    std::vector<Tensor> inputs;
    std::vector<std::string> names;
    for (auto& [name, t] : params.named_parameters()) {
        inputs.push_back(t);
        names.push_back(name);
    }
    std::vector<GradcheckEntry> out;
    for (const double margin : {0.0, 2.0}) {
        const auto fn = [&](Tape& t) { return occupancy_loss(t, params, points, queries, labels, margin); };
        const auto r = gradcheck(fn, inputs, GradcheckOptions{step, 1e-8, 0});
        GradcheckEntry entry;
        entry.name = margin == 0.0 ? "model loss (stage 1)" : "model loss (stage 2, margin 2)";
        entry.tolerance = kModelTolerance;
        record(entry, r, names[r.worst_input]);
        out.push_back(entry);
    }
    return out;
}

} // namespace gridformer
