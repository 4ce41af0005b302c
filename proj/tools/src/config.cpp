// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer_cli/config.hpp>

#include <gridformer/error.hpp>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <type_traits>
#include <variant>

namespace gridformer::cli {

namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

// Reads typed fields out of one JSON object and remembers which keys were
// consumed, so leftovers can be reported as typos.
class Section {
public:
    Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) {
            throw ConfigError(fmt::format("{}: expected an object", path_));
        }
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return obj_.at(key);
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!obj_.contains(key)) {
            return;
        }
        seen_.insert(key);
        const json& v = obj_.at(key);
        const std::string where = path_ + "." + key;
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) {
                throw ConfigError(where + ": expected true or false");
            }
            out = v.get<bool>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) {
                throw ConfigError(where + ": expected a number");
            }
            out = v.get<double>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_unsigned()) {
                throw ConfigError(where + ": expected a non-negative integer");
            }
            const auto u = v.get<std::uint64_t>();
            if (u > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) {
                throw ConfigError(where + ": value out of range");
            }
            out = static_cast<T>(u);
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) {
                throw ConfigError(where + ": expected a string");
            }
            out = v.get<std::string>();
        } else if constexpr (std::is_same_v<T, Vec3>) {
            if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number()) {
                throw ConfigError(where + ": expected [x, y, z]");
            }
            out = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
        }
    }

    template <typename T>
    T require(const std::string& key) {
        if (!obj_.contains(key)) {
            throw ConfigError(fmt::format("{}: missing key '{}'", path_, key));
        }
        T out{};
        read(key, out);
        return out;
    }

    void finish() const {
        for (const auto& item : obj_.items()) {
            if (!seen_.count(item.key())) {
                throw ConfigError(fmt::format("{}: unknown key '{}'", path_, item.key()));
            }
        }
    }

    const std::string& path() const { return path_; }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

ShapeSpec
parse_shape(const json& node, const std::string& path) {
    Section s(node, path);
    const auto kind = s.require<std::string>("kind");
    ShapeSpec out = default_scene();
    if (kind == "sphere") {
        out = ShapeSpec::sphere(s.require<Vec3>("center"), s.require<double>("radius"));
    } else if (kind == "box") {
        out = ShapeSpec::box(s.require<Vec3>("center"), s.require<Vec3>("half_extents"));
    } else if (kind == "torus") {
        out = ShapeSpec::torus(s.require<Vec3>("center"), s.require<double>("major_radius"),
                               s.require<double>("minor_radius"));
    } else if (kind == "union") {
        if (!s.has("members")) {
            throw ConfigError(path + ": missing key 'members'");
        }
        const json& members = s.raw("members");
        if (!members.is_array() || members.empty()) {
            throw ConfigError(path + ".members: expected a non-empty array");
        }
        std::vector<ShapeSpec> parts;
        for (std::size_t i = 0; i < members.size(); ++i) {
            parts.push_back(parse_shape(members[i], fmt::format("{}.members[{}]", path, i)));
        }
        out = ShapeSpec::unite(parts);
    } else {
        throw ConfigError(fmt::format("{}.kind: unknown shape '{}'", path, kind));
    }
    s.finish();
    return out;
}

ordered
vec_json(const Vec3& v) {
    return ordered::array({v[0], v[1], v[2]});
}

ordered
primitive_json(const Primitive& p) {
    return std::visit(
        [](const auto& prim) -> ordered {
            using T = std::decay_t<decltype(prim)>;
            ordered o;
            if constexpr (std::is_same_v<T, Sphere>) {
                o["kind"] = "sphere";
                o["center"] = vec_json(prim.center);
                o["radius"] = prim.radius;
            } else if constexpr (std::is_same_v<T, Box>) {
                o["kind"] = "box";
                o["center"] = vec_json(prim.center);
                o["half_extents"] = vec_json(prim.half_extents);
            } else {
                o["kind"] = "torus";
                o["center"] = vec_json(prim.center);
                o["major_radius"] = prim.major_radius;
                o["minor_radius"] = prim.minor_radius;
            }
            return o;
        },
        p);
}

ordered
shape_json(const ShapeSpec& spec) {
    if (!spec.is_union()) {
        return primitive_json(spec.primitives().front());
    }
    ordered o;
    o["kind"] = "union";
    o["members"] = ordered::array();
    for (const auto& p : spec.primitives()) {
        o["members"].push_back(primitive_json(p));
    }
    return o;
}

AttentionKind
parse_attention(const std::string& s, const std::string& where) {
    if (s == "vector") {
        return AttentionKind::Vector;
    }
    if (s == "scalar") {
        return AttentionKind::Scalar;
    }
    throw ConfigError(fmt::format("{}: expected \"vector\" or \"scalar\", got \"{}\"", where, s));
}

FeatureCombine
parse_combine(const std::string& s, const std::string& where) {
    if (s == "sum") {
        return FeatureCombine::Sum;
    }
    if (s == "concat") {
        return FeatureCombine::Concat;
    }
    throw ConfigError(fmt::format("{}: expected \"sum\" or \"concat\", got \"{}\"", where, s));
}

} // namespace

ShapeSpec
default_scene() {
    return ShapeSpec::unite({ShapeSpec::sphere({0.35, 0.5, 0.5}, 0.2),
                             ShapeSpec::box({0.62, 0.5, 0.5}, {0.15, 0.15, 0.15})});
}

void
ExperimentConfig::set_all_seeds(std::uint64_t seed) {
    seeds = {seed, seed, seed, seed};
}

DataParams
ExperimentConfig::data_params() const {
    DataParams p = data;
    p.boundary_radius = train.boundary_radius;
    p.seed = seeds.data;
    return p;
}

TrainConfig
ExperimentConfig::train_config() const {
    TrainConfig t = train;
    t.seed = seeds.train;
    return t;
}

EvalConfig
ExperimentConfig::eval_config() const {
    EvalConfig e = eval;
    e.tau = meshing.tau;
    e.seed = seeds.eval;
    return e;
}

void
ExperimentConfig::validate() const {
    try {
        model.validate();
        train.validate();
    } catch (const ContractError& e) {
        throw ConfigError(e.what());
    }
    if (data.n_points == 0 || data.n_queries == 0) {
        throw ConfigError("data: n_points and n_queries must be positive");
    }
    if (!(data.sigma >= 0.0)) {
        throw ConfigError("data.sigma must be non-negative");
    }
    if (!(meshing.tau > 0.0 && meshing.tau < 1.0)) {
        throw ConfigError("meshing.tau must lie in (0, 1)");
    }
    if (meshing.mise_initial_resolution < 1 || meshing.mise_steps < 0 || meshing.mise_steps > 6) {
        throw ConfigError("meshing: need mise_initial_resolution >= 1 and 0 <= mise_steps <= 6");
    }
    if (meshing.chunk == 0) {
        throw ConfigError("meshing.chunk must be positive");
    }
    if (eval.surface_samples == 0 || eval.iou_queries == 0 || !(eval.fscore_threshold > 0.0)) {
        throw ConfigError("eval: sample counts and fscore_threshold must be positive");
    }
}

ExperimentConfig
parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
    }
    ExperimentConfig c;
    Section top(root, "config");
    if (top.has("shape")) {
        c.shape = parse_shape(top.raw("shape"), "config.shape");
    }
    if (top.has("data")) {
        Section s(top.raw("data"), "config.data");
        s.read("n_points", c.data.n_points);
        s.read("sigma", c.data.sigma);
        s.read("n_queries", c.data.n_queries);
        s.finish();
    }
    if (top.has("model")) {
        Section s(top.raw("model"), "config.model");
        s.read("base_resolution", c.model.base_resolution);
        s.read("channels", c.model.channels);
        s.read("unet_depth", c.model.unet_depth);
        s.read("depthwise_last_k", c.model.depthwise_last_k);
        s.read("enable_downsampling", c.model.enable_downsampling);
        s.read("decoder_hidden", c.model.decoder_hidden);
        s.read("decoder_blocks", c.model.decoder_blocks);
        if (s.has("attention")) {
            c.model.attention = parse_attention(s.require<std::string>("attention"), "config.model.attention");
        }
        if (s.has("combine")) {
            c.model.combine = parse_combine(s.require<std::string>("combine"), "config.model.combine");
        }
        s.finish();
    }
    if (top.has("train")) {
        Section s(top.raw("train"), "config.train");
        s.read("stage1_lr", c.train.stage1_lr);
        s.read("stage2_lr", c.train.stage2_lr);
        s.read("margin", c.train.margin);
        s.read("boundary_radius", c.train.boundary_radius);
        s.read("batch_points", c.train.batch_points);
        s.read("stage1_steps", c.train.stage1_steps);
        s.read("stage2_steps", c.train.stage2_steps);
        s.read("adam_beta1", c.train.adam.beta1);
        s.read("adam_beta2", c.train.adam.beta2);
        s.read("adam_eps", c.train.adam.eps);
        s.read("plateau_stop", c.train.plateau_stop);
        s.read("plateau_window", c.train.plateau_window);
        s.read("plateau_tolerance", c.train.plateau_tolerance);
        s.read("clip_norm", c.train.clip_norm);
        s.read("stage2_uniform_fraction", c.train.stage2_uniform_fraction);
        s.read("boundary_optimization", c.boundary_optimization);
        s.finish();
    }
    if (top.has("meshing")) {
        Section s(top.raw("meshing"), "config.meshing");
        s.read("tau", c.meshing.tau);
        s.read("mise_initial_resolution", c.meshing.mise_initial_resolution);
        s.read("mise_steps", c.meshing.mise_steps);
        s.read("dense", c.meshing.dense);
        s.read("chunk", c.meshing.chunk);
        s.finish();
    }
    if (top.has("eval")) {
        Section s(top.raw("eval"), "config.eval");
        s.read("surface_samples", c.eval.surface_samples);
        s.read("iou_queries", c.eval.iou_queries);
        s.read("fscore_threshold", c.eval.fscore_threshold);
        s.finish();
    }
    if (top.has("seeds")) {
        Section s(top.raw("seeds"), "config.seeds");
        s.read("data", c.seeds.data);
        s.read("model", c.seeds.model);
        s.read("train", c.seeds.train);
        s.read("eval", c.seeds.eval);
        s.finish();
    }
    top.read("output_dir", c.output_dir);
    top.finish();
    c.validate();
    return c;
}

ExperimentConfig
load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(fmt::format("cannot open config '{}'", path.string()));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string
dump_config(const ExperimentConfig& c) {
    ordered root;
    root["shape"] = shape_json(c.shape);
    root["data"] = {{"n_points", c.data.n_points}, {"sigma", c.data.sigma}, {"n_queries", c.data.n_queries}};
    root["model"] = {
        {"base_resolution", c.model.base_resolution},
        {"channels", c.model.channels},
        {"unet_depth", c.model.unet_depth},
        {"depthwise_last_k", c.model.depthwise_last_k},
        {"enable_downsampling", c.model.enable_downsampling},
        {"decoder_hidden", c.model.decoder_hidden},
        {"decoder_blocks", c.model.decoder_blocks},
        {"attention", c.model.attention == AttentionKind::Vector ? "vector" : "scalar"},
        {"combine", c.model.combine == FeatureCombine::Sum ? "sum" : "concat"},
    };
    root["train"] = {
        {"stage1_lr", c.train.stage1_lr},
        {"stage2_lr", c.train.stage2_lr},
        {"margin", c.train.margin},
        {"boundary_radius", c.train.boundary_radius},
        {"batch_points", c.train.batch_points},
        {"stage1_steps", c.train.stage1_steps},
        {"stage2_steps", c.train.stage2_steps},
        {"adam_beta1", c.train.adam.beta1},
        {"adam_beta2", c.train.adam.beta2},
        {"adam_eps", c.train.adam.eps},
        {"plateau_stop", c.train.plateau_stop},
        {"plateau_window", c.train.plateau_window},
        {"plateau_tolerance", c.train.plateau_tolerance},
        {"clip_norm", c.train.clip_norm},
        {"stage2_uniform_fraction", c.train.stage2_uniform_fraction},
        {"boundary_optimization", c.boundary_optimization},
    };
    root["meshing"] = {
        {"tau", c.meshing.tau},
        {"mise_initial_resolution", c.meshing.mise_initial_resolution},
        {"mise_steps", c.meshing.mise_steps},
        {"dense", c.meshing.dense},
        {"chunk", c.meshing.chunk},
    };
    root["eval"] = {
        {"surface_samples", c.eval.surface_samples},
        {"iou_queries", c.eval.iou_queries},
        {"fscore_threshold", c.eval.fscore_threshold},
    };
    root["seeds"] = {
        {"data", c.seeds.data}, {"model", c.seeds.model}, {"train", c.seeds.train}, {"eval", c.seeds.eval}};
    root["output_dir"] = c.output_dir;
    return root.dump(2) + "\n";
}

} // namespace gridformer::cli
