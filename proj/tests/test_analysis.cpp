#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "vmdnn/analysis.hpp"
#include "vmdnn/experiment.hpp"

using namespace vmdnn;
using analysis::TraceLayer;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("vmdnn_an_" + std::to_string(
                                  std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

/// A synthetic trace holding the given observations in one trial's PFC slot.
analysis::ActivationTrace trace_from_rows(const std::vector<std::vector<double>>& rows) {
    analysis::ActivationTrace trace;
    const int dim = static_cast<int>(rows.front().size());
    trace.dims = {dim, dim, dim, dim, dim};
    analysis::TrialTrace tt;
    for (auto& layer : tt.layers) layer = rows;
    trace.trials.push_back(std::move(tt));
    return trace;
}

}  // namespace

TEST_CASE("pca recovers a line exactly", "[analysis]") {
    Rng rng(5);
    std::vector<std::vector<double>> rows;
    const std::vector<double> dir = {0.6, -0.8, 0.0};
    for (int i = 0; i < 50; ++i) {
        const double s = rng.uniform(-2.0, 2.0);
        rows.push_back({1.0 + s * dir[0], 2.0 + s * dir[1], -1.0 + s * dir[2]});
    }
    const analysis::PcaResult r = analysis::pca(trace_from_rows(rows), TraceLayer::PFC, 3);
    CHECK(r.explained_ratio[0] == Catch::Approx(1.0).margin(1e-10));
    CHECK(r.explained_ratio[1] == Catch::Approx(0.0).margin(1e-10));
    CHECK(r.explained_ratio[2] == Catch::Approx(0.0).margin(1e-10));
    // first component parallel to dir
    const double dot =
        r.components[0][0] * dir[0] + r.components[0][1] * dir[1] + r.components[0][2] * dir[2];
    CHECK(std::abs(dot) == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("pca on an isotropic cloud spreads variance evenly", "[analysis]") {
    Rng rng(7);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 10000; ++i) {
        // sum of uniforms: near-isotropic by construction
        std::vector<double> row(4);
        for (double& x : row) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) acc += rng.uniform(-1.0, 1.0);
            x = acc;
        }
        rows.push_back(std::move(row));
    }
    const analysis::PcaResult r = analysis::pca(trace_from_rows(rows), TraceLayer::PFC, 4);
    for (double ratio : r.explained_ratio)
        CHECK(ratio == Catch::Approx(0.25).epsilon(0.10));
}

TEST_CASE("pca recovers a planted rank-2 subspace", "[analysis]") {
    Rng rng(11);
    const int dim = 12;
    // orthonormal planted basis
    std::vector<std::vector<double>> basis = {std::vector<double>(dim, 0.0),
                                              std::vector<double>(dim, 0.0)};
    for (int d = 0; d < dim; ++d) {
        basis[0][d] = std::sin(0.7 * d + 0.3);
        basis[1][d] = std::cos(1.3 * d - 0.2);
    }
    auto normalize = [&](std::vector<double>& v) {
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        for (double& x : v) x /= n;
    };
    normalize(basis[0]);
    double proj = 0.0;
    for (int d = 0; d < dim; ++d) proj += basis[0][d] * basis[1][d];
    for (int d = 0; d < dim; ++d) basis[1][d] -= proj * basis[0][d];
    normalize(basis[1]);

    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 400; ++i) {
        const double a = rng.uniform(-2.0, 2.0);
        const double b = rng.uniform(-0.9, 0.9);
        std::vector<double> row(dim);
        for (int d = 0; d < dim; ++d) row[d] = 3.0 + a * basis[0][d] + b * basis[1][d];
        rows.push_back(std::move(row));
    }
    const analysis::PcaResult r = analysis::pca(trace_from_rows(rows), TraceLayer::PFC, 2);
    CHECK(oracles::principal_angle(r.components, basis) < 1e-6);
    CHECK(r.explained_ratio[0] + r.explained_ratio[1] == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("pca ratios are monotone and components orthonormal", "[analysis]") {
    Rng rng(13);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 300; ++i) {
        std::vector<double> row(6);
        for (int d = 0; d < 6; ++d) row[d] = rng.uniform(-1.0, 1.0) * (1.0 + d);
        rows.push_back(std::move(row));
    }
    const analysis::PcaResult r = analysis::pca(trace_from_rows(rows), TraceLayer::PFC, 6);
    double sum = 0.0;
    for (std::size_t i = 0; i < r.explained_ratio.size(); ++i) {
        CHECK(r.explained_ratio[i] >= 0.0);
        if (i > 0) CHECK(r.explained_ratio[i] <= r.explained_ratio[i - 1] + 1e-12);
        sum += r.explained_ratio[i];
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
    for (std::size_t i = 0; i < r.components.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double dot = 0.0;
            for (int d = 0; d < 6; ++d) dot += r.components[i][d] * r.components[j][d];
            CHECK(dot == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-10));
        }
    CHECK_THROWS_AS(analysis::pca(trace_from_rows(rows), TraceLayer::PFC, 7), ConfigError);
}

TEST_CASE("record captures layer activations per step", "[analysis]") {
    const ExperimentConfig ec = default_desk_experiment();
    const VMDNNConfig cfg = ec.network;
    const ParameterSet theta = init_parameters(cfg, 3, 0.5);
    Rng rng(17);
    const std::vector<task::TrialSpec> trials =
        task::sample_trials(ec.geom, rng, task::Split::TR, 2);
    const analysis::ActivationTrace trace = analysis::record(cfg, theta, ec.geom, trials);
    REQUIRE(trace.trials.size() == 2);
    CHECK(trace.dims[static_cast<int>(TraceLayer::PFC)] == cfg.pfc_neurons);
    for (const analysis::TrialTrace& tt : trace.trials) {
        for (const auto& layer : tt.layers)
            CHECK(layer.size() == static_cast<std::size_t>(trials[0].horizon));
        CHECK(tt.layers[0][0].size() ==
              static_cast<std::size_t>(trace.dims[0]));
    }
    // re-record: identical
    const analysis::ActivationTrace again = analysis::record(cfg, theta, ec.geom, trials);
    CHECK(again.trials[0].layers[2] == trace.trials[0].layers[2]);
}

TEST_CASE("teacher-as-model scores 100% on every split", "[analysis]") {
    const ExperimentConfig ec = default_desk_experiment();
    const VMDNNConfig cfg = ec.network;
    const ParameterSet theta = ParameterSet::zeros(cfg);
    Rng rng(23);
    analysis::EvalOptions opts;
    opts.teacher_as_model = true;
    for (task::Split split :
         {task::Split::TR, task::Split::OBJ, task::Split::SUB, task::Split::OBJxSUB}) {
        const auto trials = task::sample_trials(ec.geom, rng, split, 8);
        const analysis::EvalCounts counts =
            analysis::evaluate_trials(cfg, theta, ec.geom, trials, opts);
        CHECK(counts.success == counts.n);
    }
    // teacher ignores frames: occlusion-immune
    analysis::EvalOptions occluded = opts;
    occluded.occlusion.onset = 0;
    const auto trials = task::sample_trials(ec.geom, rng, task::Split::TR, 8);
    const analysis::EvalCounts counts =
        analysis::evaluate_trials(cfg, theta, ec.geom, trials, occluded);
    CHECK(counts.success == counts.n);
}

TEST_CASE("untrained zero parameters never succeed", "[analysis]") {
    const ExperimentConfig ec = default_desk_experiment();
    const VMDNNConfig cfg = ec.network;
    const ParameterSet theta = ParameterSet::zeros(cfg);
    Rng rng(29);
    const auto trials = task::sample_trials(ec.geom, rng, task::Split::TR, 8);
    const analysis::EvalCounts counts = analysis::evaluate_trials(cfg, theta, ec.geom, trials);
    CHECK(counts.success == 0);
    CHECK(counts.n == 8);
}

TEST_CASE("worker pool reduces identically to the serial path", "[analysis]") {
    const ExperimentConfig ec = default_desk_experiment();
    const VMDNNConfig cfg = ec.network;
    const ParameterSet theta = init_parameters(cfg, 31, 0.5);
    Rng rng(37);
    const auto trials = task::sample_trials(ec.geom, rng, task::Split::OBJ, 9);
    analysis::EvalOptions serial, parallel;
    parallel.workers = 3;
    const analysis::EvalCounts a = analysis::evaluate_trials(cfg, theta, ec.geom, trials, serial);
    const analysis::EvalCounts b =
        analysis::evaluate_trials(cfg, theta, ec.geom, trials, parallel);
    CHECK(a.success == b.success);
    CHECK(a.confusion == b.confusion);
    CHECK(a.other == b.other);
}

TEST_CASE("results CSV export and read-back", "[analysis]") {
    TempDir tmp;
    analysis::ResultsTable table;
    analysis::ResultsRow row;
    row.condition = "MSTNN+SLOW";
    row.vision_mode = "MSTNN";
    row.pfc_mode = "SLOW";
    row.split = "TR";
    row.seed = 1;
    row.n = 48;
    row.success = 45;
    row.confusion = 2;
    row.other = 1;
    table.rows.push_back(row);
    row.split = "t=24";
    row.seed = 2;
    row.success = 40;
    row.confusion = 5;
    row.other = 3;
    table.rows.push_back(row);

    const fs::path file = tmp.path / "results.csv";
    analysis::export_csv(table, file);

    // header + formatting
    std::ifstream in(file);
    std::string header, line1;
    std::getline(in, header);
    CHECK(header == "condition,vision_mode,pfc_mode,split,seed,n,success,confusion,other");
    std::getline(in, line1);
    CHECK(line1 == "MSTNN+SLOW,MSTNN,SLOW,TR,1,48,0.9375,0.0417,0.0208");

    const analysis::ResultsTable back = analysis::read_results_csv(file);
    REQUIRE(back.rows.size() == 2);
    CHECK(back.rows[0].success == 45);
    CHECK(back.rows[1].split == "t=24");
    CHECK(back.rows[1].other == 3);

    // write-read-write equality
    const fs::path file2 = tmp.path / "results2.csv";
    analysis::export_csv(back, file2);
    std::ifstream a(file), b(file2);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
}

TEST_CASE("empty results table writes a header-only file", "[analysis]") {
    TempDir tmp;
    const fs::path file = tmp.path / "empty.csv";
    analysis::export_csv(analysis::ResultsTable{}, file);
    std::ifstream in(file);
    std::string header, rest;
    std::getline(in, header);
    CHECK(header == "condition,vision_mode,pfc_mode,split,seed,n,success,confusion,other");
    CHECK_FALSE(std::getline(in, rest));
}

TEST_CASE("pca CSV schema", "[analysis]") {
    TempDir tmp;
    Rng rng(41);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 30; ++i)
        rows.push_back({rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()});
    const analysis::PcaResult r = analysis::pca(trace_from_rows(rows), TraceLayer::MS, 3);
    const fs::path file = tmp.path / "pca.csv";
    analysis::export_pca_csv(r, TraceLayer::MS, file);
    std::ifstream in(file);
    std::string header, line;
    std::getline(in, header);
    CHECK(header == "trial,step,layer,pc1,pc2,pc3");
    int lines = 0;
    while (std::getline(in, line)) {
        ++lines;
        CHECK(line.find("M_S") != std::string::npos);
    }
    CHECK(lines == 30);
}

TEST_CASE("pearson correlates what it should", "[analysis]") {
    std::vector<double> a = {1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<double> b = {2.1, 4.2, 5.9, 8.1, 10.0};
    CHECK(analysis::pearson(a, b) > 0.999);
    std::vector<double> c = {5.0, 4.0, 3.0, 2.0, 1.0};
    CHECK(analysis::pearson(a, c) == Catch::Approx(-1.0).margin(1e-12));
    std::vector<double> flat(5, 2.0);
    CHECK(analysis::pearson(a, flat) == 0.0);
}
