// vmdnn: pipeline driver for the synthetic gesture-to-grasp experiments.
//
// Commands: gen-data, pretrain, train, eval, occlude, analyze, gradcheck.
// Each command reads the declarative JSON config, writes its artifacts under
// the output directory together with a run manifest, and uses stable exit
// codes: 0 success, 2 invalid config, 3 bad output path, 4 missing
// prerequisite, 5 numerical divergence.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vmdnn/analysis.hpp"
#include "vmdnn/checkpoint.hpp"
#include "vmdnn/dataset_io.hpp"
#include "vmdnn/experiment.hpp"
#include "vmdnn/network.hpp"
#include "vmdnn/task.hpp"
#include "vmdnn/training.hpp"
#include "vmdnn/version.hpp"

namespace fs = std::filesystem;
using namespace vmdnn;

namespace {

constexpr int kExitInvalidConfig = 2;
constexpr int kExitBadOutputPath = 3;
constexpr int kExitMissingPrerequisite = 4;
constexpr int kExitDivergence = 5;

int log_level() {
    const char* env = std::getenv("VMDNN_LOG");
    if (!env) return 1;
    try {
        return std::stoi(env);
    } catch (...) {
        return 1;
    }
}

void log(int level, const std::string& msg) {
    if (log_level() >= level) std::cout << msg << std::endl;
}

struct CommonArgs {
    std::string config_path;
    std::string out_override;
    std::string condition_filter;  // e.g. "MSTNN+SLOW"; empty = all
    long long seed_override = -1;
    int workers = 1;
    bool from_scratch = false;
    bool teacher_as_model = false;
};

struct LoadedConfig {
    ExperimentConfig ec;
    nlohmann::json raw;
    fs::path out;
};

/// Loads + validates the config; exits 2 on violations.
LoadedConfig load_or_exit(const CommonArgs& args) {
    LoadedConfig lc;
    try {
        std::ifstream in(args.config_path);
        if (!in) throw ConfigError("cannot open config file " + args.config_path);
        in >> lc.raw;
        lc.ec = experiment_from_json(lc.raw);
    } catch (const std::exception& e) {
        std::cerr << "invalid config: " << e.what() << std::endl;
        std::exit(kExitInvalidConfig);
    }
    const auto violations = validate_experiment(lc.ec);
    if (!violations.empty()) {
        std::cerr << "invalid config (" << violations.size() << " violations):" << std::endl;
        for (const auto& v : violations) std::cerr << "  - " << v << std::endl;
        std::exit(kExitInvalidConfig);
    }
    if (!args.out_override.empty()) lc.ec.output_dir = args.out_override;
    lc.out = lc.ec.output_dir;
    return lc;
}

std::string condition_tag(VisionMode vm, PfcMode pm) {
    return to_string(vm) + "+" + to_string(pm);
}

std::string run_tag(VisionMode vm, PfcMode pm, std::uint64_t seed) {
    return condition_tag(vm, pm) + "_s" + std::to_string(seed);
}

/// (condition, seed) pairs selected by the filters.
struct RunSelector {
    std::vector<std::pair<VisionMode, PfcMode>> conditions;
    std::vector<std::uint64_t> seeds;
};

RunSelector select_runs(const ExperimentConfig& ec, const CommonArgs& args) {
    RunSelector sel;
    for (const auto& [vm, pm] : ec.conditions)
        if (args.condition_filter.empty() || condition_tag(vm, pm) == args.condition_filter)
            sel.conditions.emplace_back(vm, pm);
    if (sel.conditions.empty()) {
        std::cerr << "invalid config: condition filter '" << args.condition_filter
                  << "' matches nothing" << std::endl;
        std::exit(kExitInvalidConfig);
    }
    if (args.seed_override >= 0)
        sel.seeds = {static_cast<std::uint64_t>(args.seed_override)};
    else
        sel.seeds = ec.seeds;
    return sel;
}

void write_run_manifest(const fs::path& out, const std::string& command,
                        const nlohmann::json& config,
                        const std::vector<std::string>& artifacts) {
    nlohmann::json m;
    m["command"] = command;
    m["build"] = std::string("vmdnn ") + kVersion;
    m["config"] = config;
    const std::string dump = config.dump();
    char crc_hex[24];
    std::snprintf(crc_hex, sizeof(crc_hex), "%016llx",
                  static_cast<unsigned long long>(crc64(dump.data(), dump.size())));
    m["config_crc64"] = crc_hex;
    m["artifacts"] = artifacts;
    std::ofstream f(out / (command + "_manifest.json"), std::ios::trunc);
    f << m.dump(2) << '\n';
}

fs::path dataset_dir(const fs::path& out, const std::string& name) {
    return out / "data" / name;
}

fs::path checkpoint_dir(const fs::path& out, VisionMode vm, PfcMode pm, std::uint64_t seed) {
    return out / "checkpoints" / run_tag(vm, pm, seed);
}

void require_artifact(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) {
        std::cerr << "missing prerequisite: " << what << " (" << p.string() << ")" << std::endl;
        std::exit(kExitMissingPrerequisite);
    }
}

// --- gen-data ---------------------------------------------------------------

int cmd_gen_data(const CommonArgs& args) {
    LoadedConfig lc = load_or_exit(args);
    const ExperimentConfig& ec = lc.ec;
    const fs::path parent = lc.out.parent_path();
    if (!parent.empty() && !fs::exists(parent)) {
        std::cerr << "bad output path: parent directory " << parent << " does not exist"
                  << std::endl;
        return kExitBadOutputPath;
    }

    const std::uint64_t data_seed =
        args.seed_override >= 0 ? static_cast<std::uint64_t>(args.seed_override) : ec.data_seed;
    const SoftmaxGroupSpec codec = ec.network.mo;

    // stage into a temp sibling, then move into place
    const fs::path staging = lc.out.string() + ".staging";
    std::error_code ignore;
    fs::remove_all(staging, ignore);
    try {
        fs::create_directories(staging / "data");

        struct Plan {
            std::string name;
            task::Split split;
            int n;
            bool gestureless;
        };
        const std::vector<Plan> plans = {
            {"tr", task::Split::TR, ec.n_train, false},
            {"obj", task::Split::OBJ, ec.n_eval, false},
            {"sub", task::Split::SUB, ec.n_eval, false},
            {"objxsub", task::Split::OBJxSUB, ec.n_eval, false},
            {"gestureless", task::Split::TR, ec.n_gestureless, true},
        };
        std::vector<std::string> artifacts;
        int stream = 0;
        for (const Plan& plan : plans) {
            Rng rng(Rng::derive(data_seed, static_cast<std::uint64_t>(stream++)));
            DatasetManifest manifest;
            manifest.seed = data_seed;
            manifest.split = task::to_string(plan.split);
            manifest.gestureless = plan.gestureless;
            manifest.frame_height = ec.geom.frame_height;
            manifest.frame_width = ec.geom.frame_width;
            manifest.output_size = codec.total();
            manifest.codec = codec;
            manifest.trials =
                task::sample_trials(ec.geom, rng, plan.split, plan.n, plan.gestureless);
            const auto samples = task::make_dataset(ec.geom, codec, manifest.trials);
            write_dataset(staging / "data" / plan.name, manifest, samples);
            artifacts.push_back("data/" + plan.name);
            log(1, "wrote data/" + plan.name + " (" + std::to_string(plan.n) + " trials)");
        }
        {
            Rng rng(Rng::derive(data_seed, 100));
            const auto clips = task::make_gesture_clips(ec.geom, rng, ec.n_clips);
            write_gesture_clips(staging / "data" / "gesture_clips", clips, data_seed,
                                ec.geom.frame_height, ec.geom.frame_width);
            artifacts.push_back("data/gesture_clips");
        }
        {
            Rng rng(Rng::derive(data_seed, 101));
            const auto clips = task::make_gesture_clips(ec.geom, rng, ec.n_clips_eval);
            write_gesture_clips(staging / "data" / "gesture_clips_eval", clips, data_seed,
                                ec.geom.frame_height, ec.geom.frame_width);
            artifacts.push_back("data/gesture_clips_eval");
        }
        write_run_manifest(staging, "gen-data", lc.raw, artifacts);

        // move data/ and the manifest into the output directory
        fs::create_directories(lc.out);
        fs::remove_all(lc.out / "data", ignore);
        fs::rename(staging / "data", lc.out / "data");
        fs::rename(staging / "gen-data_manifest.json", lc.out / "gen-data_manifest.json");
        fs::remove_all(staging, ignore);
    } catch (const std::exception& e) {
        fs::remove_all(staging, ignore);
        std::cerr << "gen-data failed: " << e.what() << std::endl;
        return kExitBadOutputPath;
    }
    return 0;
}

// --- pretrain -----------------------------------------------------------------

int cmd_pretrain(const CommonArgs& args) {
    LoadedConfig lc = load_or_exit(args);
    const ExperimentConfig& ec = lc.ec;
    require_artifact(dataset_dir(lc.out, "gestureless") / "manifest.json",
                     "gestureless dataset (run gen-data)");
    require_artifact(dataset_dir(lc.out, "gesture_clips") / "manifest.json",
                     "gesture clips (run gen-data)");

    const Dataset gestureless = read_dataset(dataset_dir(lc.out, "gestureless"));
    const auto clips = read_gesture_clips(dataset_dir(lc.out, "gesture_clips"));
    const RunSelector sel = select_runs(ec, args);

    std::vector<std::string> artifacts;
    for (const auto& [vm, pm] : sel.conditions) {
        for (std::uint64_t seed : sel.seeds) {
            const VMDNNConfig cfg = apply_condition(ec.network, vm, pm);
            const fs::path dir = checkpoint_dir(lc.out, vm, pm, seed);
            fs::create_directories(dir);
            log(1, "pretraining " + run_tag(vm, pm, seed));

            const ParameterSet theta0 =
                init_parameters(cfg, Rng::derive(seed, 0), ec.training.init_scale);

            TrainingConfig tc = ec.training;
            tc.seed = Rng::derive(seed, 1);
            tc.epochs = ec.pretrain_grasp_epochs;
            TrainResult grasp;
            try {
                grasp = pretrain_grasp(cfg, theta0, gestureless.samples, tc,
                                       [&](const EpochStat& s) {
                                           log(2, "  grasp epoch " + std::to_string(s.epoch) +
                                                      " loss " + std::to_string(s.mean_loss));
                                       });
            } catch (const TrainDivergenceError& e) {
                std::cerr << "divergence: " << e.what() << std::endl;
                return kExitDivergence;
            }
            write_loss_csv(dir / "pretrain_grasp_loss.csv", grasp.curve);

            TrainingConfig vc = ec.training;
            vc.seed = Rng::derive(seed, 2);
            vc.epochs = ec.pretrain_visual_epochs;
            const VisualPretrainResult vis = pretrain_visual(cfg, grasp.params, clips, vc, 4);
            ParameterSet pretrained = grasp.params;
            splice_visual(pretrained, vis.pathway);

            save_checkpoint(cfg, pretrained, dir / "pretrained.ckpt");
            artifacts.push_back(fs::relative(dir / "pretrained.ckpt", lc.out).string());
            log(1, "  wrote " + (dir / "pretrained.ckpt").string());
        }
    }
    write_run_manifest(lc.out, "pretrain", lc.raw, artifacts);
    return 0;
}

// --- train ---------------------------------------------------------------------

int cmd_train(const CommonArgs& args) {
    LoadedConfig lc = load_or_exit(args);
    const ExperimentConfig& ec = lc.ec;
    require_artifact(dataset_dir(lc.out, "tr") / "manifest.json", "TR dataset (run gen-data)");
    const Dataset tr = read_dataset(dataset_dir(lc.out, "tr"));
    const RunSelector sel = select_runs(ec, args);

    std::vector<std::string> artifacts;
    for (const auto& [vm, pm] : sel.conditions) {
        for (std::uint64_t seed : sel.seeds) {
            const VMDNNConfig cfg = apply_condition(ec.network, vm, pm);
            const fs::path dir = checkpoint_dir(lc.out, vm, pm, seed);
            fs::create_directories(dir);

            ParameterSet theta0;
            if (args.from_scratch) {
                theta0 = init_parameters(cfg, Rng::derive(seed, 0), ec.training.init_scale);
            } else {
                require_artifact(dir / "pretrained.ckpt",
                                 "pretrained checkpoint for " + run_tag(vm, pm, seed) +
                                     " (run pretrain, or pass --from-scratch)");
                auto [ck_cfg, ck_params] = load_checkpoint(dir / "pretrained.ckpt");
                theta0 = std::move(ck_params);
            }

            TrainingConfig tc = ec.training;
            tc.seed = Rng::derive(seed, 3);
            log(1, "training " + run_tag(vm, pm, seed) + " (" + std::to_string(tc.epochs) +
                       " epochs)");
            TrainResult result;
            try {
                result = train(cfg, theta0, tr.samples, tc,
                               [&](const EpochStat& s) {
                                   log(2, "  epoch " + std::to_string(s.epoch) + " loss " +
                                              std::to_string(s.mean_loss));
                               },
                               (dir / "last_good.ckpt").string());
            } catch (const TrainDivergenceError& e) {
                std::cerr << "divergence: " << e.what() << std::endl;
                return kExitDivergence;
            }
            save_checkpoint(cfg, result.params, dir / "trained.ckpt");
            write_loss_csv(dir / "train_loss.csv", result.curve);
            artifacts.push_back(fs::relative(dir / "trained.ckpt", lc.out).string());
            log(1, "  final mean loss " + std::to_string(result.curve.back().mean_loss));
        }
    }
    write_run_manifest(lc.out, "train", lc.raw, artifacts);
    return 0;
}

// --- eval / occlude ---------------------------------------------------------------

struct LoadedModel {
    VMDNNConfig cfg;
    ParameterSet params;
};

LoadedModel load_model(const fs::path& out, VisionMode vm, PfcMode pm, std::uint64_t seed) {
    const fs::path ck = checkpoint_dir(out, vm, pm, seed) / "trained.ckpt";
    require_artifact(ck, "trained checkpoint for " + run_tag(vm, pm, seed) + " (run train)");
    auto [cfg, params] = load_checkpoint(ck);
    return {cfg, std::move(params)};
}

int cmd_eval(const CommonArgs& args) {
    LoadedConfig lc = load_or_exit(args);
    const ExperimentConfig& ec = lc.ec;
    const std::vector<std::pair<std::string, std::string>> splits = {
        {"TR", "tr"}, {"OBJ", "obj"}, {"SUB", "sub"}, {"OBJxSUB", "objxsub"}};
    std::map<std::string, Dataset> datasets;
    for (const auto& [tag, name] : splits) {
        require_artifact(dataset_dir(lc.out, name) / "manifest.json",
                         tag + " dataset (run gen-data)");
        datasets.emplace(tag, read_dataset(dataset_dir(lc.out, name)));
    }
    const RunSelector sel = select_runs(ec, args);

    analysis::ResultsTable table;
    analysis::EvalOptions opts;
    opts.workers = args.workers;
    opts.teacher_as_model = args.teacher_as_model;
    for (const auto& [vm, pm] : sel.conditions) {
        for (std::uint64_t seed : sel.seeds) {
            const VMDNNConfig base = apply_condition(ec.network, vm, pm);
            LoadedModel model{base, ParameterSet::zeros(base)};
            if (!opts.teacher_as_model) model = load_model(lc.out, vm, pm, seed);
            for (const auto& [tag, name] : splits) {
                const analysis::EvalCounts counts = analysis::evaluate_trials(
                    model.cfg, model.params, ec.geom, datasets.at(tag).manifest.trials, opts);
                analysis::ResultsRow row = analysis::make_row(model.cfg, tag, seed, counts);
                if (opts.teacher_as_model) row.condition = "TEACHER";
                table.rows.push_back(row);
                log(1, run_tag(vm, pm, seed) + " " + tag + ": " +
                           std::to_string(counts.success) + "/" + std::to_string(counts.n));
            }
            if (opts.teacher_as_model) break;  // one pass is enough for the teacher
        }
        if (opts.teacher_as_model) break;
    }
    fs::create_directories(lc.out);
    analysis::export_csv(table, lc.out / "results.csv");
    write_run_manifest(lc.out, "eval", lc.raw, {"results.csv"});
    log(1, "wrote " + (lc.out / "results.csv").string());
    return 0;
}

int cmd_occlude(const CommonArgs& args) {
    LoadedConfig lc = load_or_exit(args);
    const ExperimentConfig& ec = lc.ec;
    require_artifact(dataset_dir(lc.out, "tr") / "manifest.json", "TR dataset (run gen-data)");
    const Dataset tr = read_dataset(dataset_dir(lc.out, "tr"));
    const RunSelector sel = select_runs(ec, args);

    std::vector<int> onsets = ec.occlusion_onsets;
    if (onsets.empty() && !tr.manifest.trials.empty())
        onsets = task::occlusion_points(ec.geom, tr.manifest.trials.front());

    analysis::ResultsTable table;
    for (const auto& [vm, pm] : sel.conditions) {
        for (std::uint64_t seed : sel.seeds) {
            const VMDNNConfig base = apply_condition(ec.network, vm, pm);
            LoadedModel model{base, ParameterSet::zeros(base)};
            if (!args.teacher_as_model) model = load_model(lc.out, vm, pm, seed);

            analysis::EvalOptions opts;
            opts.workers = args.workers;
            opts.teacher_as_model = args.teacher_as_model;
            const analysis::EvalCounts baseline = analysis::evaluate_trials(
                model.cfg, model.params, ec.geom, tr.manifest.trials, opts);
            analysis::ResultsRow row =
                analysis::make_row(model.cfg, "none", seed, baseline);
            if (opts.teacher_as_model) row.condition = "TEACHER";
            table.rows.push_back(row);

            for (int onset : onsets) {
                analysis::EvalOptions occ = opts;
                occ.occlusion.onset = onset;
                const analysis::EvalCounts counts = analysis::evaluate_trials(
                    model.cfg, model.params, ec.geom, tr.manifest.trials, occ);
                analysis::ResultsRow r = analysis::make_row(
                    model.cfg, "t=" + std::to_string(onset), seed, counts);
                if (opts.teacher_as_model) r.condition = "TEACHER";
                table.rows.push_back(r);
                log(1, run_tag(vm, pm, seed) + " t=" + std::to_string(onset) + ": " +
                           std::to_string(counts.success) + "/" + std::to_string(counts.n));
            }
            if (args.teacher_as_model) break;
        }
        if (args.teacher_as_model) break;
    }
    fs::create_directories(lc.out);
    analysis::export_csv(table, lc.out / "occlusion.csv");
    write_run_manifest(lc.out, "occlude", lc.raw, {"occlusion.csv"});
    log(1, "wrote " + (lc.out / "occlusion.csv").string());
    return 0;
}

// --- analyze -----------------------------------------------------------------------

int cmd_analyze(const CommonArgs& args) {
    LoadedConfig lc = load_or_exit(args);
    const ExperimentConfig& ec = lc.ec;
    require_artifact(dataset_dir(lc.out, "tr") / "manifest.json", "TR dataset (run gen-data)");
    const Dataset tr = read_dataset(dataset_dir(lc.out, "tr"));
    const RunSelector sel = select_runs(ec, args);

    // record a manageable subset of the training trials
    std::vector<task::TrialSpec> trials(
        tr.manifest.trials.begin(),
        tr.manifest.trials.begin() + std::min<std::size_t>(8, tr.manifest.trials.size()));
    const int late_onset = task::occlusion_points(ec.geom, trials.front()).back();

    std::vector<std::string> artifacts;
    std::ofstream corr(lc.out / "pca_correlation.csv", std::ios::trunc);
    corr << "condition,seed,layer,pc,r\n";
    for (const auto& [vm, pm] : sel.conditions) {
        for (std::uint64_t seed : sel.seeds) {
            const LoadedModel model = load_model(lc.out, vm, pm, seed);
            const analysis::ActivationTrace clear =
                analysis::record(model.cfg, model.params, ec.geom, trials);
            OcclusionSchedule occ;
            occ.onset = late_onset;
            const analysis::ActivationTrace occluded =
                analysis::record(model.cfg, model.params, ec.geom, trials, occ);

            const fs::path dir = lc.out / "analysis" / run_tag(vm, pm, seed);
            fs::create_directories(dir);
            for (analysis::TraceLayer layer :
                 {analysis::TraceLayer::PFC, analysis::TraceLayer::MS,
                  analysis::TraceLayer::MF}) {
                const analysis::PcaResult base = analysis::pca(clear, layer, 3);
                const std::string lname = analysis::to_string(layer);
                analysis::export_pca_csv(base, layer, dir / ("pca_" + lname + ".csv"));
                artifacts.push_back(
                    fs::relative(dir / ("pca_" + lname + ".csv"), lc.out).string());

                // project the occluded run onto the same basis and correlate
                // the post-onset development with the clear run
                for (int pc = 0; pc < 3; ++pc) {
                    double sum_r = 0.0;
                    int count = 0;
                    for (std::size_t trial = 0; trial < trials.size(); ++trial) {
                        std::vector<double> a, b;
                        const auto& rows_clear =
                            clear.trials[trial].layers[static_cast<int>(layer)];
                        const auto& rows_occ =
                            occluded.trials[trial].layers[static_cast<int>(layer)];
                        for (std::size_t t = static_cast<std::size_t>(late_onset);
                             t < rows_clear.size(); ++t) {
                            auto project = [&](const std::vector<double>& row) {
                                double acc = 0.0;
                                for (int d = 0; d < base.dim; ++d)
                                    acc += (row[static_cast<std::size_t>(d)] -
                                            base.mean[static_cast<std::size_t>(d)]) *
                                           base.components[static_cast<std::size_t>(pc)]
                                                          [static_cast<std::size_t>(d)];
                                return acc;
                            };
                            a.push_back(project(rows_clear[t]));
                            b.push_back(project(rows_occ[t]));
                        }
                        sum_r += analysis::pearson(a, b);
                        ++count;
                    }
                    char buf[160];
                    std::snprintf(buf, sizeof(buf), "%s,%llu,%s,%d,%.4f\n",
                                  condition_tag(vm, pm).c_str(),
                                  static_cast<unsigned long long>(seed), lname.c_str(), pc + 1,
                                  sum_r / count);
                    corr << buf;
                }
            }
            log(1, "analyzed " + run_tag(vm, pm, seed));
        }
    }
    corr.close();
    artifacts.push_back("pca_correlation.csv");
    write_run_manifest(lc.out, "analyze", lc.raw, artifacts);
    return 0;
}

// --- gradcheck ---------------------------------------------------------------------

int cmd_gradcheck(const CommonArgs& args) {
    // the built-in small configuration; the config file is not required
    VMDNNConfig cfg;
    cfg.input_height = 6;
    cfg.input_width = 8;
    cfg.vf = {2, 3, 3, 1, 1.0};
    cfg.vs = {2, 2, 2, 2, 15.0};
    cfg.pfc_neurons = 4;
    cfg.pfc_kh = 2;
    cfg.pfc_kw = 3;
    cfg.pfc_tau = 150.0;
    cfg.ms = {3, 70.0};
    cfg.mf = {4, 2.0};
    cfg.mo.group_count = 2;
    cfg.mo.group_size = 4;
    cfg.mo.ranges = {{0.0, 1.0}, {-1.0, 1.0}};
    cfg.mo.sigma = 0.05;
    cfg.mo_tau = 1.0;
    cfg.vision_mode = VisionMode::MSTNN;
    cfg.pfc_mode = PfcMode::SLOW;

    const std::uint64_t seed =
        args.seed_override >= 0 ? static_cast<std::uint64_t>(args.seed_override) : 2024;
    Rng rng(Rng::derive(seed, 9));
    const ParameterSet theta = init_parameters(cfg, seed, 1.0);
    SequenceSample sample;
    for (int t = 0; t < 6; ++t) {
        FeatureMapStack f(1, 6, 8);
        for (double& v : f.values) v = rng.uniform(-1.0, 1.0);
        sample.frames.push_back(std::move(f));
        std::vector<double> u(static_cast<std::size_t>(cfg.mo.total()));
        for (double& x : u) x = rng.uniform(-1.5, 1.5);
        sample.targets.push_back(grouped_softmax(u, cfg.mo));
    }
    const FdReport report = finite_difference_check(cfg, theta, sample, 1e-5);
    std::printf("checked %zu parameters, max relative error %.3e (index %zu: fd %.6e vs bptt %.6e)\n",
                report.checked, report.max_rel_err, report.worst_index, report.fd_value,
                report.bptt_value);
    return report.max_rel_err < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"visuomotor network training and evaluation pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
        auto* opt = cmd->add_option("--config", args.config_path, "experiment config JSON");
        if (needs_config) opt->required();
        cmd->add_option("--out", args.out_override, "output directory (overrides the config)");
        cmd->add_option("--seed", args.seed_override, "single seed override");
        cmd->add_option("--workers", args.workers, "evaluation worker threads");
        cmd->add_option("--condition", args.condition_filter,
                        "run only this condition, e.g. MSTNN+SLOW");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate the datasets");
    add_common(gen);
    CLI::App* pre = app.add_subcommand("pretrain", "grasp + visual pre-training");
    add_common(pre);
    CLI::App* tr = app.add_subcommand("train", "end-to-end training");
    add_common(tr);
    tr->add_flag("--from-scratch", args.from_scratch,
                 "start from random parameters instead of the pretrained checkpoint");
    CLI::App* ev = app.add_subcommand("eval", "closed-loop evaluation over the splits");
    add_common(ev);
    ev->add_flag("--teacher-as-model", args.teacher_as_model,
                 "score the scripted teacher instead of a trained model");
    CLI::App* oc = app.add_subcommand("occlude", "occlusion-onset sweep on the TR set");
    add_common(oc);
    oc->add_flag("--teacher-as-model", args.teacher_as_model,
                 "score the scripted teacher instead of a trained model");
    CLI::App* an = app.add_subcommand("analyze", "PCA of recorded layer activations");
    add_common(an);
    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
    gc->add_option("--config", args.config_path, "ignored; the check uses a built-in config");
    gc->add_option("--seed", args.seed_override, "seed for the probe parameters");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(args);
        if (pre->parsed()) return cmd_pretrain(args);
        if (tr->parsed()) return cmd_train(args);
        if (ev->parsed()) return cmd_eval(args);
        if (oc->parsed()) return cmd_occlude(args);
        if (an->parsed()) return cmd_analyze(args);
        if (gc->parsed()) return cmd_gradcheck(args);
    } catch (const TrainDivergenceError& e) {
        std::cerr << "divergence: " << e.what() << std::endl;
        return kExitDivergence;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << std::endl;
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
