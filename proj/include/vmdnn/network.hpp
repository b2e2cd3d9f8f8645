#pragma once

// The VMDNN computational graph: a two-stage leaky-integrator convolutional
// vision pathway (V_I -> V_F -> V_S), a recurrent integrating layer (PFC)
// coupling vision to the motor pathway, two recurrent motor layers with
// distinct time constants (M_S, M_F), and a grouped-softmax output layer
// (M_O). One forward_step advances every layer by one time step; rollouts
// drive it open-loop from recorded frames or closed-loop against an
// environment.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vmdnn/errors.hpp"
#include "vmdnn/numerics.hpp"
#include "vmdnn/rng.hpp"

namespace vmdnn {

enum class VisionMode { CNN, MSTNN };
enum class PfcMode { FAST, SLOW };

inline std::string to_string(VisionMode m) { return m == VisionMode::CNN ? "CNN" : "MSTNN"; }
inline std::string to_string(PfcMode m) { return m == PfcMode::FAST ? "FAST" : "SLOW"; }

struct ConvLayerSpec {
    int maps = 0;
    int kh = 0;
    int kw = 0;
    int stride = 1;
    double tau = 1.0;
};

struct RecurrentLayerSpec {
    int neurons = 0;
    double tau = 1.0;
};

/// Per-layer map sizes implied by a configuration.
struct LayerShapes {
    int vf_h = 0, vf_w = 0;
    int vs_h = 0, vs_w = 0;
    int pfc_h = 0, pfc_w = 0;
};

struct VMDNNConfig {
    int input_height = 0;
    int input_width = 0;
    ConvLayerSpec vf;
    ConvLayerSpec vs;
    int pfc_neurons = 0;
    int pfc_kh = 0;  // PFC kernel over the V_S maps, stride 1
    int pfc_kw = 0;
    double pfc_tau = 1.0;
    RecurrentLayerSpec ms;
    RecurrentLayerSpec mf;
    SoftmaxGroupSpec mo;
    double mo_tau = 1.0;
    VisionMode vision_mode = VisionMode::MSTNN;
    PfcMode pfc_mode = PfcMode::SLOW;

    // Effective time constants: the CNN condition pins both vision layers to
    // tau = 1, the fast-PFC condition pins the PFC to tau = 1.
    double tau_vf() const { return vision_mode == VisionMode::CNN ? 1.0 : vf.tau; }
    double tau_vs() const { return vision_mode == VisionMode::CNN ? 1.0 : vs.tau; }
    double tau_pfc() const { return pfc_mode == PfcMode::FAST ? 1.0 : pfc_tau; }
    double tau_ms() const { return ms.tau; }
    double tau_mf() const { return mf.tau; }
    double tau_mo() const { return mo_tau; }

    std::string condition_name() const {
        return to_string(vision_mode) + "+" + to_string(pfc_mode);
    }

    LayerShapes shapes() const {
        LayerShapes s;
        s.vf_h = conv_out_len(input_height, vf.kh, vf.stride);
        s.vf_w = conv_out_len(input_width, vf.kw, vf.stride);
        s.vs_h = conv_out_len(s.vf_h, vs.kh, vs.stride);
        s.vs_w = conv_out_len(s.vf_w, vs.kw, vs.stride);
        s.pfc_h = conv_out_len(s.vs_h, pfc_kh, 1);
        s.pfc_w = conv_out_len(s.vs_w, pfc_kw, 1);
        return s;
    }
};

/// Collects every violation rather than stopping at the first.
inline std::vector<std::string> validate_config(const VMDNNConfig& cfg) {
    std::vector<std::string> v;
    auto need = [&](bool ok, const std::string& msg) {
        if (!ok) v.push_back(msg);
    };
    need(cfg.input_height > 0 && cfg.input_width > 0, "input dimensions must be positive");
    need(cfg.vf.maps > 0 && cfg.vs.maps > 0, "V_F/V_S map counts must be positive");
    need(cfg.vf.kh > 0 && cfg.vf.kw > 0 && cfg.vs.kh > 0 && cfg.vs.kw > 0,
         "kernel sizes must be positive");
    need(cfg.vf.stride >= 1 && cfg.vs.stride >= 1, "sampling factors must be >= 1");
    need(cfg.pfc_neurons > 0 && cfg.ms.neurons > 0 && cfg.mf.neurons > 0,
         "PFC/M_S/M_F neuron counts must be positive");
    need(cfg.vf.tau >= 1.0 && cfg.vs.tau >= 1.0 && cfg.pfc_tau >= 1.0 && cfg.ms.tau >= 1.0 &&
             cfg.mf.tau >= 1.0 && cfg.mo_tau >= 1.0,
         "all time constants must be >= 1");

    const LayerShapes s = cfg.shapes();
    if (cfg.vf.kh > cfg.input_height || cfg.vf.kw > cfg.input_width)
        v.push_back("V_F kernel larger than the input image");
    else if (s.vf_h <= 0 || s.vf_w <= 0)
        v.push_back("V_F output shape is not positive");
    if (s.vf_h > 0 && s.vf_w > 0) {
        if (cfg.vs.kh > s.vf_h || cfg.vs.kw > s.vf_w)
            v.push_back("V_S kernel larger than the V_F maps");
        else if (s.vs_h <= 0 || s.vs_w <= 0)
            v.push_back("V_S output shape is not positive");
    }
    if (s.vs_h > 0 && s.vs_w > 0) {
        if (s.pfc_h != 1 || s.pfc_w != 1)
            v.push_back("PFC kernel must cover the V_S map exactly (output must be 1x1, got " +
                        std::to_string(s.pfc_w) + "x" + std::to_string(s.pfc_h) + ")");
    }
    for (const auto& msg : cfg.mo.validate()) v.push_back("M_O: " + msg);
    return v;
}

/// All learnable parameters. The field order below is the canonical flat
/// serialization order; each KernelBank serializes weights then biases.
struct ParameterSet {
    KernelBank k_vf, k_vs;
    KernelBank k_pfc;  // bias-free: the PFC bias lives in b_pfc
    std::vector<double> w_pfc_pfc, w_pfc_ms;
    std::vector<double> w_ms_pfc, w_ms_ms, w_ms_mf;
    std::vector<double> w_mf_ms, w_mf_mf;
    std::vector<double> w_mo_mf;
    std::vector<double> b_pfc, b_ms, b_mf, b_mo;

    static ParameterSet zeros(const VMDNNConfig& cfg) {
        const LayerShapes s = cfg.shapes();
        ParameterSet p;
        p.k_vf = KernelBank(cfg.vf.maps, 1, cfg.vf.kh, cfg.vf.kw, cfg.vf.stride);
        p.k_vs = KernelBank(cfg.vs.maps, cfg.vf.maps, cfg.vs.kh, cfg.vs.kw, cfg.vs.stride);
        p.k_pfc = KernelBank(cfg.pfc_neurons, cfg.vs.maps, cfg.pfc_kh, cfg.pfc_kw, 1,
                             /*with_bias=*/false);
        const std::size_t np = cfg.pfc_neurons, ns = cfg.ms.neurons, nf = cfg.mf.neurons,
                          no = cfg.mo.total();
        p.w_pfc_pfc.assign(np * np, 0.0);
        p.w_pfc_ms.assign(np * ns, 0.0);
        p.w_ms_pfc.assign(ns * np, 0.0);
        p.w_ms_ms.assign(ns * ns, 0.0);
        p.w_ms_mf.assign(ns * nf, 0.0);
        p.w_mf_ms.assign(nf * ns, 0.0);
        p.w_mf_mf.assign(nf * nf, 0.0);
        p.w_mo_mf.assign(no * nf, 0.0);
        p.b_pfc.assign(np, 0.0);
        p.b_ms.assign(ns, 0.0);
        p.b_mf.assign(nf, 0.0);
        p.b_mo.assign(no, 0.0);
        (void)s;
        return p;
    }

    /// Visits every segment in canonical order. `decays` marks segments that
    /// receive weight decay (kernels and weight matrices, not biases).
    template <typename F>
    void visit(F&& f) {
        f("k_vf.weights", k_vf.weights, true);
        f("k_vf.biases", k_vf.biases, false);
        f("k_vs.weights", k_vs.weights, true);
        f("k_vs.biases", k_vs.biases, false);
        f("k_pfc.weights", k_pfc.weights, true);
        f("w_pfc_pfc", w_pfc_pfc, true);
        f("w_pfc_ms", w_pfc_ms, true);
        f("w_ms_pfc", w_ms_pfc, true);
        f("w_ms_ms", w_ms_ms, true);
        f("w_ms_mf", w_ms_mf, true);
        f("w_mf_ms", w_mf_ms, true);
        f("w_mf_mf", w_mf_mf, true);
        f("w_mo_mf", w_mo_mf, true);
        f("b_pfc", b_pfc, false);
        f("b_ms", b_ms, false);
        f("b_mf", b_mf, false);
        f("b_mo", b_mo, false);
    }
    template <typename F>
    void visit(F&& f) const {
        const_cast<ParameterSet*>(this)->visit(
            [&](const char* name, std::vector<double>& seg, bool decays) {
                f(name, static_cast<const std::vector<double>&>(seg), decays);
            });
    }

    std::size_t count() const {
        std::size_t n = 0;
        visit([&](const char*, const std::vector<double>& seg, bool) { n += seg.size(); });
        return n;
    }

    std::vector<double> to_flat() const {
        std::vector<double> flat;
        flat.reserve(count());
        visit([&](const char*, const std::vector<double>& seg, bool) {
            flat.insert(flat.end(), seg.begin(), seg.end());
        });
        return flat;
    }

    void from_flat(std::span<const double> flat) {
        if (flat.size() != count())
            throw ConfigError("from_flat: expected " + std::to_string(count()) +
                              " values, got " + std::to_string(flat.size()));
        std::size_t pos = 0;
        visit([&](const char*, std::vector<double>& seg, bool) {
            for (double& x : seg) x = flat[pos++];
        });
    }
};

/// Mirror of ParameterSet in the same canonical order.
using GradientSet = ParameterSet;

inline std::size_t count_parameters(const VMDNNConfig& cfg) {
    return ParameterSet::zeros(cfg).count();
}

/// Uniform init on [-scale/sqrt(fan_in), +scale/sqrt(fan_in)] per segment,
/// biases zero; deterministic in the seed, drawn in canonical order.
inline ParameterSet init_parameters(const VMDNNConfig& cfg, std::uint64_t seed,
                                    double scale = 1.0) {
    ParameterSet p = ParameterSet::zeros(cfg);
    Rng rng(seed);
    auto fill = [&](std::vector<double>& seg, int fan_in) {
        const double a = scale / std::sqrt(static_cast<double>(fan_in));
        for (double& x : seg) x = rng.uniform(-a, a);
    };
    fill(p.k_vf.weights, p.k_vf.in_maps * p.k_vf.kh * p.k_vf.kw);
    fill(p.k_vs.weights, p.k_vs.in_maps * p.k_vs.kh * p.k_vs.kw);
    fill(p.k_pfc.weights, p.k_pfc.in_maps * p.k_pfc.kh * p.k_pfc.kw);
    const int np = cfg.pfc_neurons, ns = cfg.ms.neurons, nf = cfg.mf.neurons;
    fill(p.w_pfc_pfc, np);
    fill(p.w_pfc_ms, ns);
    fill(p.w_ms_pfc, np);
    fill(p.w_ms_ms, ns);
    fill(p.w_ms_mf, nf);
    fill(p.w_mf_ms, ns);
    fill(p.w_mf_mf, nf);
    fill(p.w_mo_mf, nf);
    return p;
}

/// Per-layer internal states and activations at one time step.
struct NetworkState {
    FeatureMapStack u_vf, v_vf, u_vs, v_vs;
    std::vector<double> u_pfc, y_pfc;
    std::vector<double> u_ms, y_ms;
    std::vector<double> u_mf, y_mf;
    std::vector<double> u_mo;
    OutputVector y_mo;
    int t = 0;
};

/// Neutral start: all internal states zero, tanh activations zero, softmax
/// output uniform within each group.
inline NetworkState init_state(const VMDNNConfig& cfg) {
    const LayerShapes s = cfg.shapes();
    NetworkState st;
    st.u_vf = FeatureMapStack(cfg.vf.maps, s.vf_h, s.vf_w);
    st.v_vf = st.u_vf;
    st.u_vs = FeatureMapStack(cfg.vs.maps, s.vs_h, s.vs_w);
    st.v_vs = st.u_vs;
    st.u_pfc.assign(cfg.pfc_neurons, 0.0);
    st.y_pfc.assign(cfg.pfc_neurons, 0.0);
    st.u_ms.assign(cfg.ms.neurons, 0.0);
    st.y_ms.assign(cfg.ms.neurons, 0.0);
    st.u_mf.assign(cfg.mf.neurons, 0.0);
    st.y_mf.assign(cfg.mf.neurons, 0.0);
    st.u_mo.assign(cfg.mo.total(), 0.0);
    st.y_mo = grouped_softmax(st.u_mo, cfg.mo);
    st.t = 0;
    return st;
}

namespace detail {

// y += W x  for row-major W[rows][cols]
inline void matvec_add(std::span<const double> w, std::span<const double> x,
                       std::span<double> y) {
    const std::size_t rows = y.size(), cols = x.size();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* wr = w.data() + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] += acc;
    }
}

// y += W^T g  for row-major W[rows][cols]; g has `rows` entries.
inline void matvec_t_add(std::span<const double> w, std::span<const double> g,
                         std::span<double> y) {
    const std::size_t rows = g.size(), cols = y.size();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* wr = w.data() + r * cols;
        const double gr = g[r];
        for (std::size_t c = 0; c < cols; ++c) y[c] += gr * wr[c];
    }
}

inline void check_finite(std::span<const double> xs, const char* layer, int step) {
    for (double x : xs)
        if (!std::isfinite(x)) throw DivergenceError(layer, step);
}

}  // namespace detail

/// Advances every layer by one step, writing the result into `next` (which
/// may alias nothing of `prev`). Update order V_F -> V_S -> PFC -> M_S ->
/// M_F -> M_O; edges marked previous-step read `prev`, so M_F sees the
/// pre-update M_S and M_F activations even though M_S was just updated.
inline void forward_step_into(const VMDNNConfig& cfg, const ParameterSet& p,
                              const NetworkState& prev, const FeatureMapStack& frame,
                              NetworkState& next) {
    if (frame.maps != 1 || frame.height != cfg.input_height || frame.width != cfg.input_width)
        throw ConfigError("forward_step: frame shape mismatch");
    for (double v : frame.values)
        if (!(v >= -1.0 && v <= 1.0))
            throw ConfigError("forward_step: frame values must lie in [-1, 1]");

    const int step = prev.t + 1;
    const double tau_vf = cfg.tau_vf(), tau_vs = cfg.tau_vs(), tau_pfc = cfg.tau_pfc();
    const double tau_ms = cfg.tau_ms(), tau_mf = cfg.tau_mf(), tau_mo = cfg.tau_mo();

    // V_F
    conv_valid_into(frame, p.k_vf, next.v_vf);  // v_vf temporarily holds the drive
    if (!next.u_vf.same_shape(next.v_vf)) next.u_vf = next.v_vf;
    for (std::size_t i = 0; i < next.u_vf.values.size(); ++i)
        next.u_vf.values[i] = leaky_update(prev.u_vf.values[i], next.v_vf.values[i], tau_vf);
    detail::check_finite(next.u_vf.values, "V_F", step);
    for (std::size_t i = 0; i < next.v_vf.values.size(); ++i)
        next.v_vf.values[i] = scaled_tanh(next.u_vf.values[i]);

    // V_S
    conv_valid_into(next.v_vf, p.k_vs, next.v_vs);
    if (!next.u_vs.same_shape(next.v_vs)) next.u_vs = next.v_vs;
    for (std::size_t i = 0; i < next.u_vs.values.size(); ++i)
        next.u_vs.values[i] = leaky_update(prev.u_vs.values[i], next.v_vs.values[i], tau_vs);
    detail::check_finite(next.u_vs.values, "V_S", step);
    for (std::size_t i = 0; i < next.v_vs.values.size(); ++i)
        next.v_vs.values[i] = scaled_tanh(next.u_vs.values[i]);

    // PFC: current-step V_S, previous-step PFC and M_S
    const int np = cfg.pfc_neurons, ns = cfg.ms.neurons, nf = cfg.mf.neurons;
    const int no = cfg.mo.total();
    std::vector<double> drive(static_cast<std::size_t>(np));
    {
        FeatureMapStack pfc_conv;
        conv_valid_into(next.v_vs, p.k_pfc, pfc_conv);  // np maps of 1x1
        for (int i = 0; i < np; ++i) drive[i] = pfc_conv.values[i] + p.b_pfc[i];
    }
    detail::matvec_add(p.w_pfc_pfc, prev.y_pfc, drive);
    detail::matvec_add(p.w_pfc_ms, prev.y_ms, drive);
    next.u_pfc.resize(np);
    next.y_pfc.resize(np);
    for (int i = 0; i < np; ++i)
        next.u_pfc[i] = leaky_update(prev.u_pfc[i], drive[i], tau_pfc);
    detail::check_finite(next.u_pfc, "PFC", step);
    for (int i = 0; i < np; ++i) next.y_pfc[i] = scaled_tanh(next.u_pfc[i]);

    // M_S: current-step PFC, previous-step M_S and M_F
    drive.assign(static_cast<std::size_t>(ns), 0.0);
    for (int i = 0; i < ns; ++i) drive[i] = p.b_ms[i];
    detail::matvec_add(p.w_ms_pfc, next.y_pfc, drive);
    detail::matvec_add(p.w_ms_ms, prev.y_ms, drive);
    detail::matvec_add(p.w_ms_mf, prev.y_mf, drive);
    next.u_ms.resize(ns);
    next.y_ms.resize(ns);
    for (int i = 0; i < ns; ++i) next.u_ms[i] = leaky_update(prev.u_ms[i], drive[i], tau_ms);
    detail::check_finite(next.u_ms, "M_S", step);
    for (int i = 0; i < ns; ++i) next.y_ms[i] = scaled_tanh(next.u_ms[i]);

    // M_F: previous-step M_S and M_F only
    drive.assign(static_cast<std::size_t>(nf), 0.0);
    for (int i = 0; i < nf; ++i) drive[i] = p.b_mf[i];
    detail::matvec_add(p.w_mf_ms, prev.y_ms, drive);
    detail::matvec_add(p.w_mf_mf, prev.y_mf, drive);
    next.u_mf.resize(nf);
    next.y_mf.resize(nf);
    for (int i = 0; i < nf; ++i) next.u_mf[i] = leaky_update(prev.u_mf[i], drive[i], tau_mf);
    detail::check_finite(next.u_mf, "M_F", step);
    for (int i = 0; i < nf; ++i) next.y_mf[i] = scaled_tanh(next.u_mf[i]);

    // M_O: current-step M_F
    drive.assign(static_cast<std::size_t>(no), 0.0);
    for (int i = 0; i < no; ++i) drive[i] = p.b_mo[i];
    detail::matvec_add(p.w_mo_mf, next.y_mf, drive);
    next.u_mo.resize(no);
    for (int i = 0; i < no; ++i) next.u_mo[i] = leaky_update(prev.u_mo[i], drive[i], tau_mo);
    detail::check_finite(next.u_mo, "M_O", step);
    next.y_mo = grouped_softmax(next.u_mo, cfg.mo);

    next.t = step;
}

inline NetworkState forward_step(const VMDNNConfig& cfg, const ParameterSet& p,
                                 const NetworkState& prev, const FeatureMapStack& frame) {
    NetworkState next;
    forward_step_into(cfg, p, prev, frame, next);
    return next;
}

/// Closed-loop environment: supplies the frame for the coming step and
/// absorbs the decoded action, returning the pose actually reached.
struct Environment {
    virtual FeatureMapStack render(int t) = 0;
    virtual std::vector<double> apply(const std::vector<double>& action) = 0;
    virtual ~Environment() = default;
};

/// From `onset` onward the input frame is replaced by a neutral frame of
/// constant `neutral_value`.
struct OcclusionSchedule {
    std::optional<int> onset;
    double neutral_value = 0.0;

    bool active(int t) const { return onset.has_value() && t >= *onset; }
};

struct TrajectoryStep {
    std::vector<double> action;    // decoded M_O group values
    std::vector<double> env_pose;  // pose reached after applying (closed loop only)
    OutputVector y_mo;
    std::optional<NetworkState> state;  // full snapshot, when recording
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;
};

inline Trajectory run_open_loop(const VMDNNConfig& cfg, const ParameterSet& p,
                                std::span<const FeatureMapStack> frames,
                                bool record_states = false) {
    if (frames.empty()) throw ConfigError("run_open_loop: no frames");
    Trajectory traj;
    traj.steps.reserve(frames.size());
    NetworkState state = init_state(cfg);
    NetworkState next;
    for (const FeatureMapStack& frame : frames) {
        forward_step_into(cfg, p, state, frame, next);
        std::swap(state, next);
        TrajectoryStep rec;
        rec.action = decode_analog(state.y_mo, cfg.mo);
        rec.y_mo = state.y_mo;
        if (record_states) rec.state = state;
        traj.steps.push_back(std::move(rec));
    }
    return traj;
}

inline Trajectory run_closed_loop(const VMDNNConfig& cfg, const ParameterSet& p,
                                  Environment& env, int horizon,
                                  const OcclusionSchedule& occlusion = {},
                                  bool record_states = false) {
    if (horizon <= 0) throw ConfigError("run_closed_loop: horizon must be positive");
    Trajectory traj;
    traj.steps.reserve(static_cast<std::size_t>(horizon));
    NetworkState state = init_state(cfg);
    NetworkState next;
    FeatureMapStack neutral;
    for (int t = 0; t < horizon; ++t) {
        FeatureMapStack frame;
        if (occlusion.active(t)) {
            if (neutral.maps == 0)
                neutral = FeatureMapStack(1, cfg.input_height, cfg.input_width,
                                          occlusion.neutral_value);
            frame = neutral;
        } else {
            frame = env.render(t);
        }
        forward_step_into(cfg, p, state, frame, next);
        std::swap(state, next);
        TrajectoryStep rec;
        rec.action = decode_analog(state.y_mo, cfg.mo);
        rec.y_mo = state.y_mo;
        rec.env_pose = env.apply(rec.action);
        if (record_states) rec.state = state;
        traj.steps.push_back(std::move(rec));
    }
    return traj;
}

}  // namespace vmdnn
