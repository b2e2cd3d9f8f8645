// End-to-end tests of the vmdnn binary: exit codes, artifact layout and
// determinism, driven through std::system against a throwaway directory.

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vmdnn/analysis.hpp"
#include "vmdnn/checkpoint.hpp"
#include "vmdnn/experiment.hpp"

using namespace vmdnn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("vmdnn_cli_" + std::to_string(
                                   std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
    const std::string cmd = std::string(VMDNN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

/// A reduced experiment that trains in seconds.
ExperimentConfig small_experiment(const fs::path& out) {
    ExperimentConfig ec = default_desk_experiment();
    ec.n_train = 8;
    ec.n_eval = 8;
    ec.n_gestureless = 6;
    ec.n_clips = 16;
    ec.n_clips_eval = 8;
    ec.training.epochs = 12;
    ec.pretrain_grasp_epochs = 8;
    ec.pretrain_visual_epochs = 8;
    ec.seeds = {1};
    ec.conditions = {{VisionMode::MSTNN, PfcMode::SLOW}};
    ec.output_dir = out.string();
    return ec;
}

fs::path write_config(const TempDir& tmp, const ExperimentConfig& ec,
                      const std::string& name = "config.json") {
    const fs::path p = tmp.path / name;
    std::ofstream f(p);
    f << to_json(ec).dump(2) << '\n';
    return p;
}

std::vector<unsigned char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("gradcheck exits 0 and prints the max error", "[cli]") {
    CHECK(run("gradcheck") == 0);
}

TEST_CASE("invalid config exits 2 with the violation list", "[cli]") {
    TempDir tmp;
    ExperimentConfig ec = small_experiment(tmp.path / "out");
    ec.network.input_width = 99;  // breaks the frame cross-check and the shape chain
    const fs::path cfg = write_config(tmp, ec);
    CHECK(run("gen-data --config " + cfg.string()) == 2);

    // unknown key
    nlohmann::json j = to_json(small_experiment(tmp.path / "out"));
    j["network"]["bogus"] = 1;
    const fs::path cfg2 = tmp.path / "bad.json";
    std::ofstream(cfg2) << j.dump();
    CHECK(run("gen-data --config " + cfg2.string()) == 2);
}

TEST_CASE("gen-data refuses a bad output path without partial writes", "[cli]") {
    TempDir tmp;
    const fs::path out = tmp.path / "no" / "such" / "parent" / "out";
    ExperimentConfig ec = small_experiment(out);
    const fs::path cfg = write_config(tmp, ec);
    CHECK(run("gen-data --config " + cfg.string()) == 3);
    CHECK_FALSE(fs::exists(out));
    CHECK_FALSE(fs::exists(tmp.path / "no"));
}

TEST_CASE("missing prerequisites exit 4", "[cli]") {
    TempDir tmp;
    const ExperimentConfig ec = small_experiment(tmp.path / "out");
    const fs::path cfg = write_config(tmp, ec);
    CHECK(run("pretrain --config " + cfg.string()) == 4);
    CHECK(run("train --config " + cfg.string()) == 4);
    CHECK(run("eval --config " + cfg.string()) == 4);
}

TEST_CASE("full small pipeline: gen-data, pretrain, train, eval, occlude, analyze", "[cli]") {
    TempDir tmp;
    const fs::path out = tmp.path / "out";
    const ExperimentConfig ec = small_experiment(out);
    const fs::path cfg = write_config(tmp, ec);

    REQUIRE(run("gen-data --config " + cfg.string()) == 0);
    REQUIRE(fs::exists(out / "data" / "tr" / "manifest.json"));
    REQUIRE(fs::exists(out / "data" / "gesture_clips" / "manifest.json"));
    REQUIRE(fs::exists(out / "gen-data_manifest.json"));

    SECTION("gen-data reruns are bit-identical") {
        std::vector<std::pair<fs::path, std::vector<unsigned char>>> before;
        for (const auto& e : fs::recursive_directory_iterator(out / "data"))
            if (e.is_regular_file()) before.emplace_back(e.path(), slurp(e.path()));
        REQUIRE(run("gen-data --config " + cfg.string()) == 0);
        for (const auto& [p, bytes] : before) CHECK(slurp(p) == bytes);
    }

    SECTION("teacher-as-model eval needs no checkpoints and scores 100%") {
        REQUIRE(run("eval --config " + cfg.string() + " --teacher-as-model") == 0);
        const analysis::ResultsTable table = analysis::read_results_csv(out / "results.csv");
        REQUIRE(table.rows.size() == 4);
        for (const auto& row : table.rows) {
            CHECK(row.condition == "TEACHER");
            CHECK(row.success == row.n);
        }
    }

    SECTION("pipeline end to end with deterministic retrain") {
        REQUIRE(run("pretrain --config " + cfg.string()) == 0);
        const fs::path ckdir = out / "checkpoints" / "MSTNN+SLOW_s1";
        REQUIRE(fs::exists(ckdir / "pretrained.ckpt"));
        REQUIRE(fs::exists(ckdir / "pretrain_grasp_loss.csv"));

        REQUIRE(run("train --config " + cfg.string()) == 0);
        REQUIRE(fs::exists(ckdir / "trained.ckpt"));
        REQUIRE(fs::exists(ckdir / "train_loss.csv"));
        const std::vector<unsigned char> first = slurp(ckdir / "trained.ckpt");

        // loss CSV carries the documented header
        std::ifstream loss(ckdir / "train_loss.csv");
        std::string header;
        std::getline(loss, header);
        CHECK(header == "epoch,mean_loss,wall_seconds,mean_step_loss");

        REQUIRE(run("train --config " + cfg.string()) == 0);
        CHECK(slurp(ckdir / "trained.ckpt") == first);

        REQUIRE(run("eval --config " + cfg.string() + " --workers 2") == 0);
        const analysis::ResultsTable table = analysis::read_results_csv(out / "results.csv");
        CHECK(table.rows.size() == 4);  // one per split
        for (const auto& row : table.rows) CHECK(row.n == 8);

        REQUIRE(run("occlude --config " + cfg.string()) == 0);
        const analysis::ResultsTable occ = analysis::read_results_csv(out / "occlusion.csv");
        CHECK(occ.rows.size() == 6);  // baseline + five onsets
        CHECK(occ.rows[0].split == "none");

        REQUIRE(run("analyze --config " + cfg.string()) == 0);
        REQUIRE(fs::exists(out / "analysis" / "MSTNN+SLOW_s1" / "pca_M_S.csv"));
        REQUIRE(fs::exists(out / "pca_correlation.csv"));

        // checkpoints reload into the right condition
        const auto [cfg2, params] = load_checkpoint(ckdir / "trained.ckpt");
        CHECK(cfg2.condition_name() == "MSTNN+SLOW");
    }
}

TEST_CASE("train --from-scratch skips the pretrained checkpoint", "[cli]") {
    TempDir tmp;
    const fs::path out = tmp.path / "out";
    ExperimentConfig ec = small_experiment(out);
    ec.training.epochs = 4;
    const fs::path cfg = write_config(tmp, ec);
    REQUIRE(run("gen-data --config " + cfg.string()) == 0);
    CHECK(run("train --config " + cfg.string()) == 4);  // no pretrained checkpoint
    CHECK(run("train --config " + cfg.string() + " --from-scratch") == 0);
    CHECK(fs::exists(out / "checkpoints" / "MSTNN+SLOW_s1" / "trained.ckpt"));
}
