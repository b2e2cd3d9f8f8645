#pragma once

// Exact reverse-mode differentiation of the unrolled network (BPTT) against
// the summed per-step KL loss, stochastic gradient descent with weight decay
// on weights and kernels (never biases), the two pre-training stages, and a
// central-difference gradient oracle.
//
// Backward bookkeeping: for every leaky layer X with tau_X,
//   lambda_X^t = dE/du_X^t = phi'(u_X^t) * dE/dy_X^t + (1 - 1/tau_X) * lambda_X^{t+1}
// and the gradient of the step-t drive is (1/tau_X) * lambda_X^t. The
// current-step / previous-step structure of the forward pass decides which
// drive gradients feed dE/dy at step t versus step t+1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vmdnn/checkpoint.hpp"
#include "vmdnn/errors.hpp"
#include "vmdnn/network.hpp"
#include "vmdnn/numerics.hpp"
#include "vmdnn/rng.hpp"

namespace vmdnn {

struct TrainingConfig {
    double learning_rate = 0.01;
    double weight_decay = 0.0005;
    int epochs = 1;
    std::uint64_t seed = 0;
    int report_every = 10;   // loss-report and checkpoint cadence, in epochs
    double grad_clip = 0.0;  // global-norm clip threshold; 0 disables
    double init_scale = 1.0;
};

/// One tutored visuomotor sequence: frames drive V_I (teacher forcing), the
/// targets are the per-step teaching distributions for M_O.
struct SequenceSample {
    std::vector<FeatureMapStack> frames;
    std::vector<OutputVector> targets;
    int trial_index = -1;
};

class TrainDivergenceError : public DivergenceError {
public:
    TrainDivergenceError(const DivergenceError& cause, int epoch, std::string checkpoint_ref)
        : DivergenceError(cause.layer(), cause.step()),
          epoch_(epoch),
          checkpoint_ref_(std::move(checkpoint_ref)),
          what_(std::string(cause.what()) + " (epoch " + std::to_string(epoch) +
                (checkpoint_ref_.empty() ? std::string()
                                         : "; last good checkpoint: " + checkpoint_ref_) +
                ")") {}

    const char* what() const noexcept override { return what_.c_str(); }
    int epoch() const { return epoch_; }
    const std::string& checkpoint_ref() const { return checkpoint_ref_; }

private:
    int epoch_;
    std::string checkpoint_ref_;
    std::string what_;
};

namespace detail {

// gK[m][j][a][b] += gout[m](y,x) * in[j](y*s+a, x*s+b);  gB[m] += gout[m](y,x)
inline void conv_backward_params(const KernelBank& bank, const FeatureMapStack& input,
                                 const FeatureMapStack& gout, std::vector<double>& gw,
                                 std::vector<double>& gb) {
    const int s = bank.stride;
    for (int m = 0; m < bank.out_maps; ++m) {
        for (int y = 0; y < gout.height; ++y) {
            for (int x = 0; x < gout.width; ++x) {
                const double g = gout.at(m, y, x);
                if (!gb.empty()) gb[m] += g;
                for (int j = 0; j < bank.in_maps; ++j) {
                    std::size_t w_idx =
                        ((static_cast<std::size_t>(m) * bank.in_maps + j) * bank.kh) * bank.kw;
                    for (int a = 0; a < bank.kh; ++a)
                        for (int b = 0; b < bank.kw; ++b)
                            gw[w_idx++] += g * input.at(j, y * s + a, x * s + b);
                }
            }
        }
    }
}

// gin[j](y*s+a, x*s+b) += gout[m](y,x) * K[m][j][a][b]; gin must be zeroed.
inline void conv_backward_input(const KernelBank& bank, const FeatureMapStack& gout,
                                FeatureMapStack& gin) {
    const int s = bank.stride;
    for (int m = 0; m < bank.out_maps; ++m) {
        for (int y = 0; y < gout.height; ++y) {
            for (int x = 0; x < gout.width; ++x) {
                const double g = gout.at(m, y, x);
                for (int j = 0; j < bank.in_maps; ++j) {
                    const double* w =
                        &bank.weights[((static_cast<std::size_t>(m) * bank.in_maps + j) *
                                       bank.kh) * bank.kw];
                    for (int a = 0; a < bank.kh; ++a)
                        for (int b = 0; b < bank.kw; ++b)
                            gin.at(j, y * s + a, x * s + b) += g * w[a * bank.kw + b];
                }
            }
        }
    }
}

// W[r][c] += g[r] * x[c]
inline void outer_add(std::span<const double> g, std::span<const double> x,
                      std::vector<double>& w) {
    for (std::size_t r = 0; r < g.size(); ++r) {
        double* wr = w.data() + r * x.size();
        const double gr = g[r];
        for (std::size_t c = 0; c < x.size(); ++c) wr[c] += gr * x[c];
    }
}

inline void add_to(std::span<const double> g, std::vector<double>& acc) {
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
}

}  // namespace detail

/// Reusable buffers so repeated bptt calls do not reallocate.
struct BpttWorkspace {
    std::vector<NetworkState> states;
    std::vector<double> lam_mo, lam_mf, lam_ms, lam_pfc;
    std::vector<double> g_dmo, g_dmf, g_dms, g_dpfc;
    std::vector<double> g_dmf_next, g_dms_next, g_dpfc_next;
    std::vector<double> r_mf, r_ms, r_pfc;
    FeatureMapStack lam_vs, lam_vf, r_vs, r_vf, g_cvs, g_cvf;
};

/// Forward rollout of a teacher-forced sample; returns the summed KL loss.
/// When `ws` is given the per-step states stay available in ws.states.
inline double forward_loss(const VMDNNConfig& cfg, const ParameterSet& p,
                           const SequenceSample& sample, BpttWorkspace* ws = nullptr) {
    const std::size_t T = sample.frames.size();
    if (T == 0 || sample.targets.size() != T)
        throw ConfigError("sample must have equal, nonzero frame/target counts");
    double loss = 0.0;
    if (ws) {
        ws->states.resize(T + 1);
        ws->states[0] = init_state(cfg);
        for (std::size_t t = 0; t < T; ++t) {
            forward_step_into(cfg, p, ws->states[t], sample.frames[t], ws->states[t + 1]);
            loss += kl_loss(sample.targets[t], ws->states[t + 1].y_mo);
        }
    } else {
        NetworkState state = init_state(cfg), next;
        for (std::size_t t = 0; t < T; ++t) {
            forward_step_into(cfg, p, state, sample.frames[t], next);
            std::swap(state, next);
            loss += kl_loss(sample.targets[t], state.y_mo);
        }
    }
    return loss;
}

/// Exact gradients of the summed KL loss through every leaky update, tanh,
/// convolution, softmax group and recurrent edge. Returns the loss.
inline double bptt(const VMDNNConfig& cfg, const ParameterSet& p, const SequenceSample& sample,
                   GradientSet& grads, BpttWorkspace& ws) {
    const std::size_t T = sample.frames.size();
    const double loss = forward_loss(cfg, p, sample, &ws);

    grads = ParameterSet::zeros(cfg);

    const int np = cfg.pfc_neurons, ns = cfg.ms.neurons, nf = cfg.mf.neurons;
    const int no = cfg.mo.total();
    const double a_vf = 1.0 - 1.0 / cfg.tau_vf(), b_vf = 1.0 / cfg.tau_vf();
    const double a_vs = 1.0 - 1.0 / cfg.tau_vs(), b_vs = 1.0 / cfg.tau_vs();
    const double a_p = 1.0 - 1.0 / cfg.tau_pfc(), b_p = 1.0 / cfg.tau_pfc();
    const double a_s = 1.0 - 1.0 / cfg.tau_ms(), b_s = 1.0 / cfg.tau_ms();
    const double a_f = 1.0 - 1.0 / cfg.tau_mf(), b_f = 1.0 / cfg.tau_mf();
    const double a_o = 1.0 - 1.0 / cfg.tau_mo(), b_o = 1.0 / cfg.tau_mo();

    ws.lam_mo.assign(no, 0.0);
    ws.lam_mf.assign(nf, 0.0);
    ws.lam_ms.assign(ns, 0.0);
    ws.lam_pfc.assign(np, 0.0);
    ws.g_dmo.assign(no, 0.0);
    ws.g_dmf.assign(nf, 0.0);
    ws.g_dms.assign(ns, 0.0);
    ws.g_dpfc.assign(np, 0.0);
    ws.g_dmf_next.assign(nf, 0.0);
    ws.g_dms_next.assign(ns, 0.0);
    ws.g_dpfc_next.assign(np, 0.0);
    const NetworkState& shape_ref = ws.states[0];
    ws.lam_vs = FeatureMapStack(shape_ref.u_vs.maps, shape_ref.u_vs.height, shape_ref.u_vs.width);
    ws.lam_vf = FeatureMapStack(shape_ref.u_vf.maps, shape_ref.u_vf.height, shape_ref.u_vf.width);
    ws.r_vs = ws.lam_vs;
    ws.r_vf = ws.lam_vf;
    ws.g_cvs = ws.lam_vs;
    ws.g_cvf = ws.lam_vf;

    for (std::size_t ti = T; ti-- > 0;) {
        const NetworkState& cur = ws.states[ti + 1];
        const NetworkState& prv = ws.states[ti];
        const OutputVector& target = sample.targets[ti];

        // M_O: dKL/du of a grouped softmax is y - target; add the leaky carry.
        for (int i = 0; i < no; ++i)
            ws.lam_mo[i] = (cur.y_mo[i] - target[i]) + a_o * ws.lam_mo[i];
        for (int i = 0; i < no; ++i) ws.g_dmo[i] = b_o * ws.lam_mo[i];

        // M_F: fed by M_O this step, by M_S and M_F drives next step.
        ws.r_mf.assign(nf, 0.0);
        detail::matvec_t_add(p.w_mo_mf, ws.g_dmo, ws.r_mf);
        detail::matvec_t_add(p.w_mf_mf, ws.g_dmf_next, ws.r_mf);
        detail::matvec_t_add(p.w_ms_mf, ws.g_dms_next, ws.r_mf);
        for (int i = 0; i < nf; ++i)
            ws.lam_mf[i] = scaled_tanh_prime(cur.u_mf[i]) * ws.r_mf[i] + a_f * ws.lam_mf[i];
        for (int i = 0; i < nf; ++i) ws.g_dmf[i] = b_f * ws.lam_mf[i];

        // M_S: fed by M_S, M_F and PFC drives next step (never this step).
        ws.r_ms.assign(ns, 0.0);
        detail::matvec_t_add(p.w_ms_ms, ws.g_dms_next, ws.r_ms);
        detail::matvec_t_add(p.w_mf_ms, ws.g_dmf_next, ws.r_ms);
        detail::matvec_t_add(p.w_pfc_ms, ws.g_dpfc_next, ws.r_ms);
        for (int i = 0; i < ns; ++i)
            ws.lam_ms[i] = scaled_tanh_prime(cur.u_ms[i]) * ws.r_ms[i] + a_s * ws.lam_ms[i];
        for (int i = 0; i < ns; ++i) ws.g_dms[i] = b_s * ws.lam_ms[i];

        // PFC: fed by M_S this step and by its own drive next step.
        ws.r_pfc.assign(np, 0.0);
        detail::matvec_t_add(p.w_ms_pfc, ws.g_dms, ws.r_pfc);
        detail::matvec_t_add(p.w_pfc_pfc, ws.g_dpfc_next, ws.r_pfc);
        for (int i = 0; i < np; ++i)
            ws.lam_pfc[i] = scaled_tanh_prime(cur.u_pfc[i]) * ws.r_pfc[i] + a_p * ws.lam_pfc[i];
        for (int i = 0; i < np; ++i) ws.g_dpfc[i] = b_p * ws.lam_pfc[i];

        // V_S: fed by the PFC kernel this step only.
        std::fill(ws.r_vs.values.begin(), ws.r_vs.values.end(), 0.0);
        {
            FeatureMapStack gout(np, 1, 1);
            for (int i = 0; i < np; ++i) gout.values[i] = ws.g_dpfc[i];
            detail::conv_backward_input(p.k_pfc, gout, ws.r_vs);
        }
        for (std::size_t i = 0; i < ws.lam_vs.values.size(); ++i)
            ws.lam_vs.values[i] = scaled_tanh_prime(cur.u_vs.values[i]) * ws.r_vs.values[i] +
                                  a_vs * ws.lam_vs.values[i];
        for (std::size_t i = 0; i < ws.g_cvs.values.size(); ++i)
            ws.g_cvs.values[i] = b_vs * ws.lam_vs.values[i];

        // V_F: fed by the V_S convolution this step only.
        std::fill(ws.r_vf.values.begin(), ws.r_vf.values.end(), 0.0);
        detail::conv_backward_input(p.k_vs, ws.g_cvs, ws.r_vf);
        for (std::size_t i = 0; i < ws.lam_vf.values.size(); ++i)
            ws.lam_vf.values[i] = scaled_tanh_prime(cur.u_vf.values[i]) * ws.r_vf.values[i] +
                                  a_vf * ws.lam_vf.values[i];
        for (std::size_t i = 0; i < ws.g_cvf.values.size(); ++i)
            ws.g_cvf.values[i] = b_vf * ws.lam_vf.values[i];

        // Parameter gradients at this step.
        detail::outer_add(ws.g_dmo, cur.y_mf, grads.w_mo_mf);
        detail::add_to(ws.g_dmo, grads.b_mo);
        detail::outer_add(ws.g_dmf, prv.y_ms, grads.w_mf_ms);
        detail::outer_add(ws.g_dmf, prv.y_mf, grads.w_mf_mf);
        detail::add_to(ws.g_dmf, grads.b_mf);
        detail::outer_add(ws.g_dms, cur.y_pfc, grads.w_ms_pfc);
        detail::outer_add(ws.g_dms, prv.y_ms, grads.w_ms_ms);
        detail::outer_add(ws.g_dms, prv.y_mf, grads.w_ms_mf);
        detail::add_to(ws.g_dms, grads.b_ms);
        detail::outer_add(ws.g_dpfc, cur.v_vs.values, grads.k_pfc.weights);
        detail::outer_add(ws.g_dpfc, prv.y_pfc, grads.w_pfc_pfc);
        detail::outer_add(ws.g_dpfc, prv.y_ms, grads.w_pfc_ms);
        detail::add_to(ws.g_dpfc, grads.b_pfc);
        detail::conv_backward_params(p.k_vs, cur.v_vf, ws.g_cvs, grads.k_vs.weights,
                                     grads.k_vs.biases);
        detail::conv_backward_params(p.k_vf, sample.frames[ti], ws.g_cvf, grads.k_vf.weights,
                                     grads.k_vf.biases);

        std::swap(ws.g_dmf_next, ws.g_dmf);
        std::swap(ws.g_dms_next, ws.g_dms);
        std::swap(ws.g_dpfc_next, ws.g_dpfc);
    }
    return loss;
}

struct BpttResult {
    double loss = 0.0;
    GradientSet grads;
};

inline BpttResult bptt(const VMDNNConfig& cfg, const ParameterSet& p,
                       const SequenceSample& sample) {
    BpttResult r;
    BpttWorkspace ws;
    r.loss = bptt(cfg, p, sample, r.grads, ws);
    return r;
}

/// w' = w - eta (dE/dw + lambda w) for weights and kernels;
/// b' = b - eta dE/db (no decay on biases).
inline void sgd_step(ParameterSet& params, const GradientSet& grads, double eta, double lambda) {
    // visit order is identical on both sets; walk them in lockstep
    std::vector<std::pair<std::vector<double>*, bool>> psegs;
    params.visit([&](const char*, std::vector<double>& seg, bool decays) {
        psegs.emplace_back(&seg, decays);
    });
    std::size_t k = 0;
    grads.visit([&](const char*, const std::vector<double>& gseg, bool) {
        auto [seg, decays] = psegs[k++];
        const double lam = decays ? lambda : 0.0;
        for (std::size_t i = 0; i < seg->size(); ++i)
            (*seg)[i] -= eta * (gseg[i] + lam * (*seg)[i]);
    });
}

inline double gradient_norm(const GradientSet& grads) {
    double sq = 0.0;
    grads.visit([&](const char*, const std::vector<double>& seg, bool) {
        for (double x : seg) sq += x * x;
    });
    return std::sqrt(sq);
}

inline void scale_gradients(GradientSet& grads, double factor) {
    grads.visit([&](const char*, std::vector<double>& seg, bool) {
        for (double& x : seg) x *= factor;
    });
}

struct EpochStat {
    int epoch = 0;            // 1-based
    double mean_loss = 0.0;   // mean over samples of the raw summed KL
    double mean_step_loss = 0.0;
    double wall_seconds = 0.0;
    int clip_events = 0;
};

struct TrainResult {
    ParameterSet params;
    std::vector<EpochStat> curve;
};

using ProgressFn = std::function<void(const EpochStat&)>;

/// Pure stochastic training: one bptt + sgd_step per sample, samples visited
/// in a seed-shuffled order each epoch. Fully deterministic given the seed.
/// When `checkpoint_path` is set, the parameters are saved there every
/// `report_every` epochs; a divergence aborts with a reference to that file.
inline TrainResult train(const VMDNNConfig& cfg, const ParameterSet& theta0,
                         const std::vector<SequenceSample>& dataset, const TrainingConfig& tc,
                         const ProgressFn& progress = {},
                         const std::string& checkpoint_path = "") {
    if (dataset.empty()) throw ConfigError("train: dataset is empty");
    if (!(tc.learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
    if (tc.weight_decay < 0.0) throw ConfigError("train: weight decay must be >= 0");

    TrainResult result;
    result.params = theta0;
    result.curve.reserve(static_cast<std::size_t>(tc.epochs));

    Rng rng(tc.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    GradientSet grads;
    BpttWorkspace ws;
    std::string last_ckpt;
    const auto t_start = std::chrono::steady_clock::now();

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t step_sum = 0;
        int clips = 0;
        for (std::size_t idx : order) {
            const SequenceSample& sample = dataset[idx];
            double loss;
            try {
                loss = bptt(cfg, result.params, sample, grads, ws);
            } catch (const DivergenceError& e) {
                throw TrainDivergenceError(e, epoch, last_ckpt);
            }
            if (tc.grad_clip > 0.0) {
                const double norm = gradient_norm(grads);
                if (norm > tc.grad_clip) {
                    scale_gradients(grads, tc.grad_clip / norm);
                    ++clips;
                }
            }
            sgd_step(result.params, grads, tc.learning_rate, tc.weight_decay);
            loss_sum += loss;
            step_sum += sample.frames.size();
        }
        EpochStat stat;
        stat.epoch = epoch;
        stat.mean_loss = loss_sum / static_cast<double>(dataset.size());
        stat.mean_step_loss = loss_sum / static_cast<double>(step_sum);
        stat.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        stat.clip_events = clips;
        result.curve.push_back(stat);
        if (progress && (epoch % std::max(1, tc.report_every) == 0 || epoch == tc.epochs))
            progress(stat);
        if (!checkpoint_path.empty() && epoch % std::max(1, tc.report_every) == 0) {
            save_checkpoint(cfg, result.params, checkpoint_path);
            last_ckpt = checkpoint_path;
        }
    }
    return result;
}

/// First pre-training stage: ordinary training on gestureless single-object
/// sequences; the returned parameters seed the end-to-end stage.
inline TrainResult pretrain_grasp(const VMDNNConfig& cfg, const ParameterSet& theta0,
                                  const std::vector<SequenceSample>& gestureless_dataset,
                                  const TrainingConfig& tc, const ProgressFn& progress = {},
                                  const std::string& checkpoint_path = "") {
    return train(cfg, theta0, gestureless_dataset, tc, progress, checkpoint_path);
}

/// A labeled gesture animation for the classifier pre-training stage.
struct GestureClip {
    std::vector<FeatureMapStack> frames;
    int label = 0;
};

/// The parameters of the visual pathway (V_I -> PFC) produced by classifier
/// pre-training, ready to splice into a full parameter set.
struct VisualPathway {
    KernelBank k_vf, k_vs, k_pfc;
    std::vector<double> b_pfc;
};

struct VisualPretrainResult {
    VisualPathway pathway;
    std::vector<double> loss_curve;  // mean cross-entropy per epoch
    double eval_accuracy = -1.0;     // on eval clips, if provided
};

inline void splice_visual(ParameterSet& theta, const VisualPathway& vp) {
    theta.k_vf = vp.k_vf;
    theta.k_vs = vp.k_vs;
    theta.k_pfc = vp.k_pfc;
    theta.b_pfc = vp.b_pfc;
}

namespace detail {

/// Vision-only forward pass with PFC recurrence severed; returns the PFC
/// activation after the final frame and fills the per-step states.
struct ClassifierStates {
    std::vector<FeatureMapStack> u_vf, v_vf, u_vs, v_vs;
    std::vector<std::vector<double>> u_pfc, y_pfc;
};

inline void classifier_forward(const VMDNNConfig& cfg, const VisualPathway& vp,
                               const std::vector<FeatureMapStack>& frames,
                               ClassifierStates& st) {
    const std::size_t T = frames.size();
    const int np = cfg.pfc_neurons;
    st.u_vf.resize(T);
    st.v_vf.resize(T);
    st.u_vs.resize(T);
    st.v_vs.resize(T);
    st.u_pfc.assign(T, std::vector<double>(np));
    st.y_pfc.assign(T, std::vector<double>(np));
    const double tau_vf = cfg.tau_vf(), tau_vs = cfg.tau_vs(), tau_pfc = cfg.tau_pfc();
    FeatureMapStack drive;
    for (std::size_t t = 0; t < T; ++t) {
        conv_valid_into(frames[t], vp.k_vf, drive);
        st.u_vf[t] = FeatureMapStack(drive.maps, drive.height, drive.width);
        for (std::size_t i = 0; i < drive.values.size(); ++i)
            st.u_vf[t].values[i] =
                leaky_update(t == 0 ? 0.0 : st.u_vf[t - 1].values[i], drive.values[i], tau_vf);
        st.v_vf[t] = st.u_vf[t];
        for (double& v : st.v_vf[t].values) v = scaled_tanh(v);

        conv_valid_into(st.v_vf[t], vp.k_vs, drive);
        st.u_vs[t] = FeatureMapStack(drive.maps, drive.height, drive.width);
        for (std::size_t i = 0; i < drive.values.size(); ++i)
            st.u_vs[t].values[i] =
                leaky_update(t == 0 ? 0.0 : st.u_vs[t - 1].values[i], drive.values[i], tau_vs);
        st.v_vs[t] = st.u_vs[t];
        for (double& v : st.v_vs[t].values) v = scaled_tanh(v);

        conv_valid_into(st.v_vs[t], vp.k_pfc, drive);  // np maps of 1x1
        for (int i = 0; i < np; ++i) {
            const double d = drive.values[i] + vp.b_pfc[i];
            st.u_pfc[t][i] = leaky_update(t == 0 ? 0.0 : st.u_pfc[t - 1][i], d, tau_pfc);
            st.y_pfc[t][i] = scaled_tanh(st.u_pfc[t][i]);
        }
    }
}

}  // namespace detail

/// Second pre-training stage: trains the visual pathway (k_VF, k_VS, k_PFC,
/// b_PFC) as a gesture classifier. A temporary softmax head is attached to
/// the PFC activation of the final clip frame, the PFC recurrent inputs
/// (w_PFC<-PFC, w_PFC<-MS) are severed, cross-entropy is backpropagated
/// through time, and the head is discarded.
inline VisualPretrainResult pretrain_visual(const VMDNNConfig& cfg, const ParameterSet& theta,
                                            const std::vector<GestureClip>& clips,
                                            const TrainingConfig& tc, int n_classes = 4,
                                            const std::vector<GestureClip>& eval_clips = {}) {
    if (clips.empty()) throw ConfigError("pretrain_visual: no clips");
    const int np = cfg.pfc_neurons;

    VisualPretrainResult result;
    result.pathway = {theta.k_vf, theta.k_vs, theta.k_pfc, theta.b_pfc};
    VisualPathway& vp = result.pathway;

    Rng rng(Rng::derive(tc.seed, 0xC1A551F1EDULL));
    std::vector<double> head_w(static_cast<std::size_t>(n_classes) * np);
    std::vector<double> head_b(n_classes, 0.0);
    {
        const double a = 1.0 / std::sqrt(static_cast<double>(np));
        for (double& w : head_w) w = rng.uniform(-a, a);
    }

    auto head_probs = [&](std::span<const double> y_pfc) {
        std::vector<double> logits(n_classes, 0.0);
        for (int c = 0; c < n_classes; ++c) {
            const double* wr = head_w.data() + static_cast<std::size_t>(c) * np;
            double acc = head_b[c];
            for (int i = 0; i < np; ++i) acc += wr[i] * y_pfc[i];
            logits[c] = acc;
        }
        const double m = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double& l : logits) {
            l = std::exp(l - m);
            sum += l;
        }
        for (double& l : logits) l /= sum;
        return logits;
    };

    detail::ClassifierStates st;
    std::vector<std::size_t> order(clips.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    const double tau_vf = cfg.tau_vf(), tau_vs = cfg.tau_vs(), tau_pfc = cfg.tau_pfc();
    const double a_vf = 1.0 - 1.0 / tau_vf, b_vf = 1.0 / tau_vf;
    const double a_vs = 1.0 - 1.0 / tau_vs, b_vs = 1.0 / tau_vs;
    const double a_pf = 1.0 - 1.0 / tau_pfc, b_pf = 1.0 / tau_pfc;

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t idx : order) {
            const GestureClip& clip = clips[idx];
            const std::size_t T = clip.frames.size();
            detail::classifier_forward(cfg, vp, clip.frames, st);
            std::vector<double> probs = head_probs(st.y_pfc[T - 1]);
            loss_sum += -std::log(std::max(probs[clip.label], kKlFloor));

            // head gradient and the seed of the PFC adjoint
            std::vector<double> dlogits = probs;
            dlogits[clip.label] -= 1.0;
            std::vector<double> gh_w(head_w.size(), 0.0), gh_b(n_classes, 0.0);
            detail::outer_add(dlogits, st.y_pfc[T - 1], gh_w);
            detail::add_to(dlogits, gh_b);

            GradientSet g = ParameterSet::zeros(cfg);  // only the visual segments are used
            std::vector<double> lam_pfc(np, 0.0), r_pfc(np, 0.0);
            FeatureMapStack lam_vs(st.u_vs[0].maps, st.u_vs[0].height, st.u_vs[0].width);
            FeatureMapStack lam_vf(st.u_vf[0].maps, st.u_vf[0].height, st.u_vf[0].width);
            FeatureMapStack r_vs = lam_vs, r_vf = lam_vf, g_cvs = lam_vs, g_cvf = lam_vf;

            for (std::size_t t = T; t-- > 0;) {
                r_pfc.assign(np, 0.0);
                if (t == T - 1) detail::matvec_t_add(head_w, dlogits, r_pfc);
                for (int i = 0; i < np; ++i)
                    lam_pfc[i] = scaled_tanh_prime(st.u_pfc[t][i]) * r_pfc[i] + a_pf * lam_pfc[i];
                std::vector<double> g_dpfc(np);
                for (int i = 0; i < np; ++i) g_dpfc[i] = b_pf * lam_pfc[i];

                detail::outer_add(g_dpfc, st.v_vs[t].values, g.k_pfc.weights);
                detail::add_to(g_dpfc, g.b_pfc);

                std::fill(r_vs.values.begin(), r_vs.values.end(), 0.0);
                {
                    FeatureMapStack gout(np, 1, 1);
                    for (int i = 0; i < np; ++i) gout.values[i] = g_dpfc[i];
                    detail::conv_backward_input(vp.k_pfc, gout, r_vs);
                }
                for (std::size_t i = 0; i < lam_vs.values.size(); ++i)
                    lam_vs.values[i] = scaled_tanh_prime(st.u_vs[t].values[i]) * r_vs.values[i] +
                                       a_vs * lam_vs.values[i];
                for (std::size_t i = 0; i < g_cvs.values.size(); ++i)
                    g_cvs.values[i] = b_vs * lam_vs.values[i];

                std::fill(r_vf.values.begin(), r_vf.values.end(), 0.0);
                detail::conv_backward_input(vp.k_vs, g_cvs, r_vf);
                for (std::size_t i = 0; i < lam_vf.values.size(); ++i)
                    lam_vf.values[i] = scaled_tanh_prime(st.u_vf[t].values[i]) * r_vf.values[i] +
                                       a_vf * lam_vf.values[i];
                for (std::size_t i = 0; i < g_cvf.values.size(); ++i)
                    g_cvf.values[i] = b_vf * lam_vf.values[i];

                detail::conv_backward_params(vp.k_vs, st.v_vf[t], g_cvs, g.k_vs.weights,
                                             g.k_vs.biases);
                detail::conv_backward_params(vp.k_vf, clip.frames[t], g_cvf, g.k_vf.weights,
                                             g.k_vf.biases);
            }

            const double eta = tc.learning_rate, wd = tc.weight_decay;
            auto upd = [&](std::vector<double>& w, const std::vector<double>& gw, bool decay) {
                const double lam = decay ? wd : 0.0;
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= eta * (gw[i] + lam * w[i]);
            };
            upd(vp.k_vf.weights, g.k_vf.weights, true);
            upd(vp.k_vf.biases, g.k_vf.biases, false);
            upd(vp.k_vs.weights, g.k_vs.weights, true);
            upd(vp.k_vs.biases, g.k_vs.biases, false);
            upd(vp.k_pfc.weights, g.k_pfc.weights, true);
            upd(vp.b_pfc, g.b_pfc, false);
            upd(head_w, gh_w, true);
            upd(head_b, gh_b, false);
        }
        result.loss_curve.push_back(loss_sum / static_cast<double>(clips.size()));
    }

    if (!eval_clips.empty()) {
        int correct = 0;
        for (const GestureClip& clip : eval_clips) {
            detail::classifier_forward(cfg, vp, clip.frames, st);
            std::vector<double> probs = head_probs(st.y_pfc[clip.frames.size() - 1]);
            const int pred = static_cast<int>(
                std::max_element(probs.begin(), probs.end()) - probs.begin());
            if (pred == clip.label) ++correct;
        }
        result.eval_accuracy = static_cast<double>(correct) / eval_clips.size();
    }
    return result;
}

/// A well-conditioned probe for gradient checks: random frames with targets
/// that perturb the network's own outputs in log space. The resulting loss
/// is small, which keeps the cancellation noise of central differences far
/// below the relative-error tolerance while every gradient path stays
/// exercised.
inline SequenceSample gradcheck_sample(const VMDNNConfig& cfg, const ParameterSet& theta, int T,
                                       std::uint64_t seed, double delta = 0.05) {
    Rng rng(seed);
    SequenceSample sample;
    for (int t = 0; t < T; ++t) {
        FeatureMapStack f(1, cfg.input_height, cfg.input_width);
        for (double& v : f.values) v = rng.uniform(-1.0, 1.0);
        sample.frames.push_back(std::move(f));
    }
    NetworkState state = init_state(cfg), next;
    for (int t = 0; t < T; ++t) {
        forward_step_into(cfg, theta, state, sample.frames[static_cast<std::size_t>(t)], next);
        std::swap(state, next);
        std::vector<double> logits(state.y_mo.size());
        for (std::size_t i = 0; i < logits.size(); ++i)
            logits[i] = std::log(state.y_mo[i]) + delta * rng.uniform(-1.0, 1.0);
        sample.targets.push_back(grouped_softmax(logits, cfg.mo));
    }
    return sample;
}

struct FdReport {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double fd_value = 0.0;
    double bptt_value = 0.0;
    std::size_t checked = 0;
};

/// Central-difference check of every BPTT gradient component (or a seeded
/// random subset of `max_params` when the parameter set is larger).
/// Relative error is |g_fd - g_bp| / max(|g_fd|, |g_bp|, 1e-8).
inline FdReport finite_difference_check(const VMDNNConfig& cfg, const ParameterSet& theta,
                                        const SequenceSample& sample, double eps,
                                        std::size_t max_params = 0, std::uint64_t seed = 0) {
    if (!(eps > 0.0)) throw ConfigError("finite_difference_check: eps must be positive");
    GradientSet grads;
    BpttWorkspace ws;
    bptt(cfg, theta, sample, grads, ws);
    const std::vector<double> g_flat = grads.to_flat();
    std::vector<double> flat = theta.to_flat();

    std::vector<std::size_t> indices(flat.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (max_params > 0 && indices.size() > max_params) {
        Rng rng(seed);
        rng.shuffle(indices);
        indices.resize(max_params);
        std::sort(indices.begin(), indices.end());
    }

    FdReport report;
    ParameterSet probe = theta;
    for (std::size_t idx : indices) {
        const double saved = flat[idx];
        flat[idx] = saved + eps;
        probe.from_flat(flat);
        const double lp = forward_loss(cfg, probe, sample);
        flat[idx] = saved - eps;
        probe.from_flat(flat);
        const double lm = forward_loss(cfg, probe, sample);
        flat[idx] = saved;

        const double fd = (lp - lm) / (2.0 * eps);
        const double bp = g_flat[idx];
        const double rel = std::abs(fd - bp) / std::max({std::abs(fd), std::abs(bp), 1e-8});
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_index = idx;
            report.fd_value = fd;
            report.bptt_value = bp;
        }
        ++report.checked;
    }
    probe.from_flat(flat);
    return report;
}

/// Loss-curve CSV: epoch,mean_loss,wall_seconds,mean_step_loss.
inline void write_loss_csv(const std::filesystem::path& path,
                           const std::vector<EpochStat>& curve) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << "epoch,mean_loss,wall_seconds,mean_step_loss\n";
    char buf[160];
    for (const EpochStat& s : curve) {
        std::snprintf(buf, sizeof(buf), "%d,%.12g,%.3f,%.12g\n", s.epoch, s.mean_loss,
                      s.wall_seconds, s.mean_step_loss);
        out << buf;
    }
}

}  // namespace vmdnn
