#pragma once

// Activation recording during closed-loop rollouts, principal-component
// analysis of pooled layer activations (covariance eigendecomposition with a
// deterministic sign convention), success/confusion result tables over trial
// sets, and the CSV exports for both.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "vmdnn/errors.hpp"
#include "vmdnn/network.hpp"
#include "vmdnn/task.hpp"

namespace vmdnn::analysis {

enum class TraceLayer { VF = 0, VS = 1, PFC = 2, MS = 3, MF = 4 };

inline constexpr std::array<const char*, 5> kTraceLayerNames = {"V_F", "V_S", "PFC", "M_S",
                                                                "M_F"};

inline const char* to_string(TraceLayer l) { return kTraceLayerNames[static_cast<int>(l)]; }

struct TrialTrace {
    task::TrialSpec trial;
    std::optional<int> occlusion_onset;
    // layers[L][step] = flattened activation vector of that layer
    std::array<std::vector<std::vector<double>>, 5> layers;
};

struct ActivationTrace {
    std::array<int, 5> dims{};  // activation width per layer
    std::vector<TrialTrace> trials;
};

/// Closed-loop rollouts with full state snapshots, flattened per layer in
/// storage order (map-major, then rows, then columns).
inline ActivationTrace record(const VMDNNConfig& cfg, const ParameterSet& params,
                              const task::TaskGeometry& geom,
                              const std::vector<task::TrialSpec>& trials,
                              const OcclusionSchedule& occlusion = {}) {
    ActivationTrace trace;
    const LayerShapes s = cfg.shapes();
    trace.dims = {cfg.vf.maps * s.vf_h * s.vf_w, cfg.vs.maps * s.vs_h * s.vs_w,
                  cfg.pfc_neurons, cfg.ms.neurons, cfg.mf.neurons};
    for (const task::TrialSpec& trial : trials) {
        task::TaskEnv env(geom, trial);
        Trajectory traj =
            run_closed_loop(cfg, params, env, trial.horizon, occlusion, /*record_states=*/true);
        TrialTrace tt;
        tt.trial = trial;
        tt.occlusion_onset = occlusion.onset;
        for (auto& layer : tt.layers) layer.reserve(traj.steps.size());
        for (const TrajectoryStep& step : traj.steps) {
            const NetworkState& st = *step.state;
            tt.layers[0].push_back(st.v_vf.values);
            tt.layers[1].push_back(st.v_vs.values);
            tt.layers[2].push_back(st.y_pfc);
            tt.layers[3].push_back(st.y_ms);
            tt.layers[4].push_back(st.y_mf);
        }
        trace.trials.push_back(std::move(tt));
    }
    return trace;
}

namespace detail {

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Deterministic;
/// eigenpairs returned in descending eigenvalue order.
inline void jacobi_eigen(std::vector<double> a, int n, std::vector<double>& eigvals,
                         std::vector<double>& eigvecs /* row k = k-th eigenvector */) {
    std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
    auto A = [&](int r, int c) -> double& { return a[static_cast<std::size_t>(r) * n + c]; };
    auto V = [&](int r, int c) -> double& { return v[static_cast<std::size_t>(r) * n + c]; };

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
        if (off < 1e-26) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = A(p, q);
                if (apq == 0.0) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) diag[static_cast<std::size_t>(i)] = A(i, i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return diag[static_cast<std::size_t>(x)] >
                                                diag[static_cast<std::size_t>(y)]; });
    eigvals.resize(static_cast<std::size_t>(n));
    eigvecs.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        eigvals[static_cast<std::size_t>(k)] = diag[static_cast<std::size_t>(order[k])];
        for (int i = 0; i < n; ++i)
            eigvecs[static_cast<std::size_t>(k) * n + i] = V(i, order[k]);
    }
}

}  // namespace detail

struct PcaResult {
    int dim = 0;
    std::vector<std::vector<double>> components;  // k orthonormal rows of length dim
    std::vector<double> explained_ratio;          // k ratios of the total variance
    std::vector<double> mean;
    // scores[trial][step][component]
    std::vector<std::vector<std::vector<double>>> scores;
};

/// PCA of one layer, pooling all steps of all recorded trials. Components
/// follow the sign convention that the largest-magnitude loading is
/// positive.
inline PcaResult pca(const ActivationTrace& trace, TraceLayer layer, int k) {
    const int L = static_cast<int>(layer);
    const int dim = trace.dims[static_cast<std::size_t>(L)];
    if (k < 1) throw ConfigError("pca: k must be >= 1");
    if (k > dim) throw ConfigError("pca: k exceeds the layer dimensionality");

    std::size_t n_obs = 0;
    for (const TrialTrace& tt : trace.trials) n_obs += tt.layers[static_cast<std::size_t>(L)].size();
    if (n_obs < static_cast<std::size_t>(k) + 1)
        throw ConfigError("pca: needs at least k+1 observations");

    PcaResult result;
    result.dim = dim;
    result.mean.assign(static_cast<std::size_t>(dim), 0.0);
    for (const TrialTrace& tt : trace.trials)
        for (const auto& row : tt.layers[static_cast<std::size_t>(L)])
            for (int d = 0; d < dim; ++d) result.mean[static_cast<std::size_t>(d)] += row[static_cast<std::size_t>(d)];
    for (double& m : result.mean) m /= static_cast<double>(n_obs);

    std::vector<double> cov(static_cast<std::size_t>(dim) * dim, 0.0);
    std::vector<double> centered(static_cast<std::size_t>(dim));
    for (const TrialTrace& tt : trace.trials) {
        for (const auto& row : tt.layers[static_cast<std::size_t>(L)]) {
            for (int d = 0; d < dim; ++d)
                centered[static_cast<std::size_t>(d)] =
                    row[static_cast<std::size_t>(d)] - result.mean[static_cast<std::size_t>(d)];
            for (int i = 0; i < dim; ++i) {
                const double ci = centered[static_cast<std::size_t>(i)];
                double* cr = cov.data() + static_cast<std::size_t>(i) * dim;
                for (int j = i; j < dim; ++j) cr[j] += ci * centered[static_cast<std::size_t>(j)];
            }
        }
    }
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < i; ++j)
            cov[static_cast<std::size_t>(i) * dim + j] = cov[static_cast<std::size_t>(j) * dim + i];
    const double denom = static_cast<double>(n_obs - 1);
    for (double& x : cov) x /= denom;

    std::vector<double> eigvals, eigvecs;
    detail::jacobi_eigen(cov, dim, eigvals, eigvecs);

    double total = 0.0;
    for (double ev : eigvals) total += std::max(ev, 0.0);
    if (total <= 0.0) total = 1.0;

    result.components.resize(static_cast<std::size_t>(k));
    result.explained_ratio.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        auto& comp = result.components[static_cast<std::size_t>(c)];
        comp.assign(eigvecs.begin() + static_cast<std::ptrdiff_t>(c) * dim,
                    eigvecs.begin() + static_cast<std::ptrdiff_t>(c + 1) * dim);
        // sign convention: the largest-|loading| entry is positive
        int arg = 0;
        for (int d = 1; d < dim; ++d)
            if (std::abs(comp[static_cast<std::size_t>(d)]) >
                std::abs(comp[static_cast<std::size_t>(arg)]))
                arg = d;
        if (comp[static_cast<std::size_t>(arg)] < 0.0)
            for (double& x : comp) x = -x;
        result.explained_ratio[static_cast<std::size_t>(c)] =
            std::max(eigvals[static_cast<std::size_t>(c)], 0.0) / total;
    }

    result.scores.reserve(trace.trials.size());
    for (const TrialTrace& tt : trace.trials) {
        const auto& rows = tt.layers[static_cast<std::size_t>(L)];
        std::vector<std::vector<double>> trial_scores;
        trial_scores.reserve(rows.size());
        for (const auto& row : rows) {
            std::vector<double> sc(static_cast<std::size_t>(k), 0.0);
            for (int c = 0; c < k; ++c) {
                const auto& comp = result.components[static_cast<std::size_t>(c)];
                double acc = 0.0;
                for (int d = 0; d < dim; ++d)
                    acc += (row[static_cast<std::size_t>(d)] - result.mean[static_cast<std::size_t>(d)]) *
                           comp[static_cast<std::size_t>(d)];
                sc[static_cast<std::size_t>(c)] = acc;
            }
            trial_scores.push_back(std::move(sc));
        }
        result.scores.push_back(std::move(trial_scores));
    }
    return result;
}

// --- evaluation tables -------------------------------------------------------

struct EvalOptions {
    int workers = 1;
    OcclusionSchedule occlusion{};
    bool teacher_as_model = false;
};

struct EvalCounts {
    int n = 0, success = 0, confusion = 0, other = 0;
};

/// Closed-loop evaluation of a trial set; trials may run on a worker pool,
/// outcomes are reduced in trial order.
inline EvalCounts evaluate_trials(const VMDNNConfig& cfg, const ParameterSet& params,
                                  const task::TaskGeometry& geom,
                                  const std::vector<task::TrialSpec>& trials,
                                  const EvalOptions& opts = {}) {
    std::vector<task::OutcomeLabel> labels(trials.size());
    auto run_one = [&](std::size_t i) {
        const task::TrialSpec& trial = trials[i];
        task::TaskEnv env(geom, trial);
        Trajectory traj;
        if (opts.teacher_as_model) {
            // scripted teacher in place of the network; immune to occlusion
            for (int t = 0; t < trial.horizon; ++t) {
                TrajectoryStep step;
                step.action = task::teacher_policy(geom, trial, t).to_vector();
                step.env_pose = env.apply(step.action);
                traj.steps.push_back(std::move(step));
            }
        } else {
            traj = run_closed_loop(cfg, params, env, trial.horizon, opts.occlusion);
        }
        labels[i] = task::evaluate(geom, trial, traj).label;
    };

    const int workers = std::max(1, opts.workers);
    if (workers == 1 || trials.size() < 2) {
        for (std::size_t i = 0; i < trials.size(); ++i) run_one(i);
    } else {
        std::vector<std::thread> pool;
        std::size_t chunk = (trials.size() + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::size_t lo = static_cast<std::size_t>(w) * chunk;
            const std::size_t hi = std::min(trials.size(), lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back([&, lo, hi] {
                for (std::size_t i = lo; i < hi; ++i) run_one(i);
            });
        }
        for (auto& th : pool) th.join();
    }

    EvalCounts counts;
    counts.n = static_cast<int>(trials.size());
    for (task::OutcomeLabel l : labels) {
        if (l == task::OutcomeLabel::SUCCESS) ++counts.success;
        else if (l == task::OutcomeLabel::FAILURE_CONFUSION) ++counts.confusion;
        else ++counts.other;
    }
    return counts;
}

struct ResultsRow {
    std::string condition;
    std::string vision_mode;
    std::string pfc_mode;
    std::string split;  // split tag, or "t=N" for an occlusion onset, or "none"
    std::uint64_t seed = 0;
    int n = 0, success = 0, confusion = 0, other = 0;
};

struct ResultsTable {
    std::vector<ResultsRow> rows;
};

inline ResultsRow make_row(const VMDNNConfig& cfg, const std::string& split, std::uint64_t seed,
                           const EvalCounts& counts) {
    ResultsRow row;
    row.condition = cfg.condition_name();
    row.vision_mode = to_string(cfg.vision_mode);
    row.pfc_mode = to_string(cfg.pfc_mode);
    row.split = split;
    row.seed = seed;
    row.n = counts.n;
    row.success = counts.success;
    row.confusion = counts.confusion;
    row.other = counts.other;
    return row;
}

/// CSV schema: condition,vision_mode,pfc_mode,split,seed,n,success,confusion,other
/// with n as an integer count and the last three columns as rates rounded to
/// four decimals.
inline void export_csv(const ResultsTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << "condition,vision_mode,pfc_mode,split,seed,n,success,confusion,other\n";
    char buf[256];
    for (const ResultsRow& r : table.rows) {
        const double n = static_cast<double>(r.n);
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%llu,%d,%.4f,%.4f,%.4f\n",
                      r.condition.c_str(), r.vision_mode.c_str(), r.pfc_mode.c_str(),
                      r.split.c_str(), static_cast<unsigned long long>(r.seed), r.n,
                      r.success / n, r.confusion / n, r.other / n);
        out << buf;
    }
}

/// Reads a results CSV back; counts are reconstructed from n and the rates,
/// which is exact for n below 10^4.
inline ResultsTable read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) ||
        line != "condition,vision_mode,pfc_mode,split,seed,n,success,confusion,other")
        throw ConfigError(path.string() + ": unexpected results CSV header");
    ResultsTable table;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        ResultsRow r;
        std::getline(ss, r.condition, ',');
        std::getline(ss, r.vision_mode, ',');
        std::getline(ss, r.pfc_mode, ',');
        std::getline(ss, r.split, ',');
        std::getline(ss, field, ',');
        r.seed = std::stoull(field);
        std::getline(ss, field, ',');
        r.n = std::stoi(field);
        double rates[3];
        for (double& rate : rates) {
            std::getline(ss, field, ',');
            rate = std::stod(field);
        }
        r.success = static_cast<int>(std::lround(rates[0] * r.n));
        r.confusion = static_cast<int>(std::lround(rates[1] * r.n));
        r.other = static_cast<int>(std::lround(rates[2] * r.n));
        if (r.success + r.confusion + r.other != r.n)
            throw ConfigError(path.string() + ": rates are inconsistent with n");
        table.rows.push_back(std::move(r));
    }
    return table;
}

/// PCA score CSV: trial,step,layer,pc1,pc2,pc3 (requires k >= 3).
inline void export_pca_csv(const PcaResult& result, TraceLayer layer,
                           const std::filesystem::path& path) {
    if (!result.scores.empty() && !result.scores.front().empty() &&
        result.scores.front().front().size() < 3)
        throw ConfigError("export_pca_csv: needs at least three components");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << "trial,step,layer,pc1,pc2,pc3\n";
    char buf[256];
    for (std::size_t trial = 0; trial < result.scores.size(); ++trial) {
        const auto& steps = result.scores[trial];
        for (std::size_t step = 0; step < steps.size(); ++step) {
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%s,%.12g,%.12g,%.12g\n", trial, step,
                          to_string(layer), steps[step][0], steps[step][1], steps[step][2]);
            out << buf;
        }
    }
}

/// Pearson correlation of two equal-length series.
inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2)
        throw ConfigError("pearson: series must have equal length >= 2");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;  // a constant series has no direction
    return sab / std::sqrt(saa * sbb);
}

}  // namespace vmdnn::analysis
