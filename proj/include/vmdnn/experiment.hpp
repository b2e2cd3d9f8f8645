#pragma once

// The declarative experiment configuration consumed by the CLI: network
// structure, training hyperparameters, task geometry and split sizes, the
// condition matrix and seed list. Parsing is strict: unknown keys are
// rejected so typos fail fast.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vmdnn/checkpoint.hpp"
#include "vmdnn/errors.hpp"
#include "vmdnn/network.hpp"
#include "vmdnn/task.hpp"
#include "vmdnn/training.hpp"

namespace vmdnn {

struct ExperimentConfig {
    VMDNNConfig network;      // base; per-condition modes are applied on top
    TrainingConfig training;  // the end-to-end stage
    int pretrain_grasp_epochs = 300;
    int pretrain_visual_epochs = 200;
    task::TaskGeometry geom;
    int n_train = 48;
    int n_eval = 32;
    int n_gestureless = 24;
    int n_clips = 96;
    int n_clips_eval = 32;
    std::uint64_t data_seed = 7;
    std::vector<std::uint64_t> seeds;
    std::vector<std::pair<VisionMode, PfcMode>> conditions;
    std::vector<int> occlusion_onsets;  // empty: derive from occlusion_points
    std::string output_dir;
};

/// The base configuration with one condition applied.
inline VMDNNConfig apply_condition(VMDNNConfig cfg, VisionMode vm, PfcMode pm) {
    cfg.vision_mode = vm;
    cfg.pfc_mode = pm;
    return cfg;
}

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& known,
                       const std::string& section) {
    if (!j.is_object()) throw ConfigError("section '" + section + "' must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key))
            throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
}

inline ConvLayerSpec parse_conv(const nlohmann::json& j, const std::string& section) {
    check_keys(j, {"maps", "kh", "kw", "stride", "tau"}, section);
    return ConvLayerSpec{j.at("maps").get<int>(), j.at("kh").get<int>(), j.at("kw").get<int>(),
                         j.at("stride").get<int>(), j.at("tau").get<double>()};
}

}  // namespace detail

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
    detail::check_keys(j, {"network", "training", "task", "experiment", "output_dir"}, "root");
    ExperimentConfig ec;

    const auto& jt = j.at("task");
    detail::check_keys(jt,
                       {"frame_height", "frame_width", "gesture_len", "dwell_len", "attend_len",
                        "reach_len", "grasp_len", "success_radius", "arm_rate", "grid_cols",
                        "grid_rows", "min_fov_scale", "n_train", "n_eval", "n_gestureless",
                        "n_clips", "n_clips_eval"},
                       "task");
    task::TaskGeometry& g = ec.geom;
    g.frame_height = jt.at("frame_height").get<int>();
    g.frame_width = jt.at("frame_width").get<int>();
    g.gesture_len = jt.at("gesture_len").get<int>();
    g.dwell_len = jt.at("dwell_len").get<int>();
    g.attend_len = jt.at("attend_len").get<int>();
    g.reach_len = jt.at("reach_len").get<int>();
    g.grasp_len = jt.at("grasp_len").get<int>();
    g.success_radius = jt.at("success_radius").get<double>();
    g.arm_rate = jt.at("arm_rate").get<double>();
    g.grid_cols = jt.at("grid_cols").get<int>();
    g.grid_rows = jt.at("grid_rows").get<int>();
    g.min_fov_scale = jt.at("min_fov_scale").get<double>();
    ec.n_train = jt.at("n_train").get<int>();
    ec.n_eval = jt.at("n_eval").get<int>();
    ec.n_gestureless = jt.at("n_gestureless").get<int>();
    ec.n_clips = jt.at("n_clips").get<int>();
    ec.n_clips_eval = jt.at("n_clips_eval").get<int>();

    const auto& jn = j.at("network");
    detail::check_keys(
        jn, {"input_height", "input_width", "vf", "vs", "pfc", "ms", "mf", "mo", "vision_mode",
             "pfc_mode"},
        "network");
    VMDNNConfig& net = ec.network;
    net.input_height = jn.at("input_height").get<int>();
    net.input_width = jn.at("input_width").get<int>();
    net.vf = detail::parse_conv(jn.at("vf"), "network.vf");
    net.vs = detail::parse_conv(jn.at("vs"), "network.vs");
    const auto& jp = jn.at("pfc");
    detail::check_keys(jp, {"neurons", "kh", "kw", "tau"}, "network.pfc");
    net.pfc_neurons = jp.at("neurons").get<int>();
    net.pfc_kh = jp.at("kh").get<int>();
    net.pfc_kw = jp.at("kw").get<int>();
    net.pfc_tau = jp.at("tau").get<double>();
    detail::check_keys(jn.at("ms"), {"neurons", "tau"}, "network.ms");
    net.ms = {jn.at("ms").at("neurons").get<int>(), jn.at("ms").at("tau").get<double>()};
    detail::check_keys(jn.at("mf"), {"neurons", "tau"}, "network.mf");
    net.mf = {jn.at("mf").at("neurons").get<int>(), jn.at("mf").at("tau").get<double>()};
    const auto& jm = jn.at("mo");
    detail::check_keys(jm, {"group_size", "sigma", "tau"}, "network.mo");
    net.mo = task::pose_codec(ec.geom, jm.at("group_size").get<int>(),
                              jm.at("sigma").get<double>());
    net.mo_tau = jm.at("tau").get<double>();
    const std::string vm = jn.at("vision_mode").get<std::string>();
    if (vm != "CNN" && vm != "MSTNN")
        throw ConfigError("vision_mode must be CNN or MSTNN, got '" + vm + "'");
    net.vision_mode = vm == "CNN" ? VisionMode::CNN : VisionMode::MSTNN;
    const std::string pm = jn.at("pfc_mode").get<std::string>();
    if (pm != "FAST" && pm != "SLOW")
        throw ConfigError("pfc_mode must be FAST or SLOW, got '" + pm + "'");
    net.pfc_mode = pm == "FAST" ? PfcMode::FAST : PfcMode::SLOW;

    const auto& jtr = j.at("training");
    detail::check_keys(jtr,
                       {"learning_rate", "weight_decay", "epochs", "seed", "report_every",
                        "grad_clip", "init_scale", "pretrain_grasp_epochs",
                        "pretrain_visual_epochs"},
                       "training");
    ec.training.learning_rate = jtr.at("learning_rate").get<double>();
    ec.training.weight_decay = jtr.at("weight_decay").get<double>();
    ec.training.epochs = jtr.at("epochs").get<int>();
    ec.training.seed = jtr.at("seed").get<std::uint64_t>();
    ec.training.report_every = jtr.at("report_every").get<int>();
    ec.training.grad_clip = jtr.at("grad_clip").get<double>();
    ec.training.init_scale = jtr.at("init_scale").get<double>();
    ec.pretrain_grasp_epochs = jtr.at("pretrain_grasp_epochs").get<int>();
    ec.pretrain_visual_epochs = jtr.at("pretrain_visual_epochs").get<int>();

    const auto& je = j.at("experiment");
    detail::check_keys(je, {"data_seed", "seeds", "conditions", "occlusion_onsets"},
                       "experiment");
    ec.data_seed = je.at("data_seed").get<std::uint64_t>();
    for (const auto& s : je.at("seeds")) ec.seeds.push_back(s.get<std::uint64_t>());
    for (const auto& c : je.at("conditions")) {
        if (!c.is_array() || c.size() != 2)
            throw ConfigError("each condition must be a [vision_mode, pfc_mode] pair");
        const std::string cv = c.at(0).get<std::string>();
        const std::string cp = c.at(1).get<std::string>();
        if (cv != "CNN" && cv != "MSTNN")
            throw ConfigError("condition vision mode must be CNN or MSTNN, got '" + cv + "'");
        if (cp != "FAST" && cp != "SLOW")
            throw ConfigError("condition PFC mode must be FAST or SLOW, got '" + cp + "'");
        ec.conditions.emplace_back(cv == "CNN" ? VisionMode::CNN : VisionMode::MSTNN,
                                   cp == "FAST" ? PfcMode::FAST : PfcMode::SLOW);
    }
    for (const auto& o : je.at("occlusion_onsets")) ec.occlusion_onsets.push_back(o.get<int>());
    ec.output_dir = j.at("output_dir").get<std::string>();
    return ec;
}

inline nlohmann::json to_json(const ExperimentConfig& ec) {
    nlohmann::json conditions = nlohmann::json::array();
    for (const auto& [vm, pm] : ec.conditions)
        conditions.push_back({to_string(vm), to_string(pm)});
    return {
        {"network",
         {{"input_height", ec.network.input_height},
          {"input_width", ec.network.input_width},
          {"vf", to_json(ec.network.vf)},
          {"vs", to_json(ec.network.vs)},
          {"pfc",
           {{"neurons", ec.network.pfc_neurons},
            {"kh", ec.network.pfc_kh},
            {"kw", ec.network.pfc_kw},
            {"tau", ec.network.pfc_tau}}},
          {"ms", {{"neurons", ec.network.ms.neurons}, {"tau", ec.network.ms.tau}}},
          {"mf", {{"neurons", ec.network.mf.neurons}, {"tau", ec.network.mf.tau}}},
          {"mo",
           {{"group_size", ec.network.mo.group_size},
            {"sigma", ec.network.mo.sigma},
            {"tau", ec.network.mo_tau}}},
          {"vision_mode", to_string(ec.network.vision_mode)},
          {"pfc_mode", to_string(ec.network.pfc_mode)}}},
        {"training",
         {{"learning_rate", ec.training.learning_rate},
          {"weight_decay", ec.training.weight_decay},
          {"epochs", ec.training.epochs},
          {"seed", ec.training.seed},
          {"report_every", ec.training.report_every},
          {"grad_clip", ec.training.grad_clip},
          {"init_scale", ec.training.init_scale},
          {"pretrain_grasp_epochs", ec.pretrain_grasp_epochs},
          {"pretrain_visual_epochs", ec.pretrain_visual_epochs}}},
        {"task",
         {{"frame_height", ec.geom.frame_height},
          {"frame_width", ec.geom.frame_width},
          {"gesture_len", ec.geom.gesture_len},
          {"dwell_len", ec.geom.dwell_len},
          {"attend_len", ec.geom.attend_len},
          {"reach_len", ec.geom.reach_len},
          {"grasp_len", ec.geom.grasp_len},
          {"success_radius", ec.geom.success_radius},
          {"arm_rate", ec.geom.arm_rate},
          {"grid_cols", ec.geom.grid_cols},
          {"grid_rows", ec.geom.grid_rows},
          {"min_fov_scale", ec.geom.min_fov_scale},
          {"n_train", ec.n_train},
          {"n_eval", ec.n_eval},
          {"n_gestureless", ec.n_gestureless},
          {"n_clips", ec.n_clips},
          {"n_clips_eval", ec.n_clips_eval}}},
        {"experiment",
         {{"data_seed", ec.data_seed},
          {"seeds", ec.seeds},
          {"conditions", conditions},
          {"occlusion_onsets", ec.occlusion_onsets}}},
        {"output_dir", ec.output_dir}};
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    try {
        return experiment_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
}

/// Network validation plus the cross-section checks.
inline std::vector<std::string> validate_experiment(const ExperimentConfig& ec) {
    std::vector<std::string> v = validate_config(ec.network);
    if (ec.network.input_height != ec.geom.frame_height ||
        ec.network.input_width != ec.geom.frame_width)
        v.push_back("network input dimensions must match the task frame dimensions");
    if (ec.network.mo.group_count != task::kPoseDim)
        v.push_back("M_O must have one softmax group per pose field");
    if (ec.geom.horizon() <= 0) v.push_back("task horizon must be positive");
    if (ec.seeds.empty()) v.push_back("experiment.seeds must not be empty");
    if (ec.conditions.empty()) v.push_back("experiment.conditions must not be empty");
    if (ec.n_train < 1 || ec.n_eval < 1 || ec.n_gestureless < 1 || ec.n_clips < 1)
        v.push_back("split sizes must be >= 1");
    if (ec.training.epochs < 1) v.push_back("training.epochs must be >= 1");
    if (!(ec.training.learning_rate > 0.0)) v.push_back("training.learning_rate must be > 0");
    if (ec.training.weight_decay < 0.0) v.push_back("training.weight_decay must be >= 0");
    for (int onset : ec.occlusion_onsets)
        if (onset < 0) v.push_back("occlusion onsets must be >= 0");
    return v;
}

/// The default desk-scale experiment; the committed configs/desk.json
/// mirrors these values.
inline ExperimentConfig default_desk_experiment() {
    ExperimentConfig ec;
    ec.geom = task::TaskGeometry{};
    ec.network.input_height = ec.geom.frame_height;
    ec.network.input_width = ec.geom.frame_width;
    ec.network.vf = {4, 4, 4, 2, 1.0};
    ec.network.vs = {8, 3, 3, 2, 15.0};
    ec.network.pfc_neurons = 10;
    ec.network.pfc_kh = 2;
    ec.network.pfc_kw = 3;
    ec.network.pfc_tau = 150.0;
    ec.network.ms = {10, 70.0};
    ec.network.mf = {15, 2.0};
    ec.network.mo = task::pose_codec(ec.geom, 10, 0.05);
    ec.network.mo_tau = 1.0;
    ec.network.vision_mode = VisionMode::MSTNN;
    ec.network.pfc_mode = PfcMode::SLOW;
    ec.training.learning_rate = 0.01;
    ec.training.weight_decay = 0.0005;
    ec.training.epochs = 400;
    ec.training.seed = 1;
    ec.training.report_every = 10;
    ec.training.grad_clip = 5.0;  // desk-scale stability escape hatch
    ec.training.init_scale = 1.0;
    ec.pretrain_grasp_epochs = 300;
    ec.pretrain_visual_epochs = 200;
    ec.n_train = 48;
    ec.n_eval = 32;
    ec.n_gestureless = 24;
    ec.n_clips = 96;
    ec.n_clips_eval = 32;
    ec.data_seed = 7;
    ec.seeds = {1, 2, 3};
    ec.conditions = {{VisionMode::CNN, PfcMode::FAST},
                     {VisionMode::CNN, PfcMode::SLOW},
                     {VisionMode::MSTNN, PfcMode::FAST},
                     {VisionMode::MSTNN, PfcMode::SLOW}};
    ec.output_dir = "runs/desk";
    return ec;
}

}  // namespace vmdnn
