#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "vmdnn/network.hpp"
#include "vmdnn/rng.hpp"

using namespace vmdnn;

namespace {

bool contains(const std::vector<std::string>& v, const std::string& needle) {
    for (const auto& s : v)
        if (s.find(needle) != std::string::npos) return true;
    return false;
}

ParameterSet zero_recurrent(ParameterSet p) {
    // every matrix consuming a previous-step activation
    std::fill(p.w_pfc_pfc.begin(), p.w_pfc_pfc.end(), 0.0);
    std::fill(p.w_pfc_ms.begin(), p.w_pfc_ms.end(), 0.0);
    std::fill(p.w_ms_ms.begin(), p.w_ms_ms.end(), 0.0);
    std::fill(p.w_ms_mf.begin(), p.w_ms_mf.end(), 0.0);
    std::fill(p.w_mf_ms.begin(), p.w_mf_ms.end(), 0.0);
    std::fill(p.w_mf_mf.begin(), p.w_mf_mf.end(), 0.0);
    return p;
}

VMDNNConfig all_fast(VMDNNConfig cfg) {
    cfg.vision_mode = VisionMode::CNN;
    cfg.pfc_mode = PfcMode::FAST;
    cfg.ms.tau = 1.0;
    cfg.mf.tau = 1.0;
    cfg.mo_tau = 1.0;
    return cfg;
}

}  // namespace

TEST_CASE("validate_config accepts the full-scale configuration", "[network]") {
    const VMDNNConfig cfg = oracles::full_scale_config();
    CHECK(validate_config(cfg).empty());
    const LayerShapes s = cfg.shapes();
    CHECK(s.vf_h == 11);
    CHECK(s.vf_w == 15);
    CHECK(s.vs_h == 3);
    CHECK(s.vs_w == 5);
    CHECK(s.pfc_h == 1);
    CHECK(s.pfc_w == 1);
}

TEST_CASE("validate_config reports shape violations", "[network]") {
    SECTION("9x9 V_S kernel still fits 15x11 maps") {
        VMDNNConfig cfg = oracles::full_scale_config();
        cfg.vs.kh = 9;
        cfg.vs.kw = 9;
        // (11-9)/2+1 = 2, (15-9)/2+1 = 4: valid shapes, only the PFC kernel
        // no longer matches the V_S map.
        cfg.pfc_kh = 2;
        cfg.pfc_kw = 4;
        CHECK(validate_config(cfg).empty());
    }
    SECTION("13x13 V_S kernel is taller than the 11-row maps") {
        VMDNNConfig cfg = oracles::full_scale_config();
        cfg.vs.kh = 13;
        cfg.vs.kw = 13;
        CHECK(contains(validate_config(cfg), "V_S kernel larger"));
    }
    SECTION("PFC kernel that does not cover the map") {
        VMDNNConfig cfg = oracles::full_scale_config();
        cfg.pfc_kh = 3;  // map is 3 high, 5 wide; kernel 4 wide -> 2x1 output
        cfg.pfc_kw = 4;
        CHECK(contains(validate_config(cfg), "PFC kernel"));
    }
    SECTION("bad tau and every violation reported") {
        VMDNNConfig cfg = oracles::full_scale_config();
        cfg.ms.tau = 0.5;
        cfg.vf.kh = 100;
        const auto violations = validate_config(cfg);
        CHECK(violations.size() >= 2);
        CHECK(contains(violations, "time constants"));
        CHECK(contains(violations, "V_F kernel"));
    }
}

TEST_CASE("count_parameters matches the enumeration oracle", "[network]") {
    const VMDNNConfig cfg = oracles::full_scale_config();
    CHECK(count_parameters(cfg) == 17946);
    CHECK(count_parameters(cfg) ==
          oracles::count_parameters_oracle(4, 8, 8, 7, 3, 5, 20, 30, 50, 110));
    CHECK(ParameterSet::zeros(cfg).to_flat().size() == 17946);

    // doubling M_F changes the count by the closed-form delta
    VMDNNConfig big = cfg;
    big.mf.neurons = 100;
    CHECK(count_parameters(big) ==
          oracles::count_parameters_oracle(4, 8, 8, 7, 3, 5, 20, 30, 100, 110));

    const VMDNNConfig tiny = oracles::tiny_config();
    CHECK(count_parameters(tiny) ==
          oracles::count_parameters_oracle(2, 3, 2, 2, 2, 3, 4, 3, 4, 8));
}

TEST_CASE("init_state is neutral", "[network]") {
    const VMDNNConfig cfg = oracles::tiny_config();
    const NetworkState st = init_state(cfg);
    CHECK(st.t == 0);
    for (double v : st.u_pfc) CHECK(v == 0.0);
    for (double v : st.u_vf.values) CHECK(v == 0.0);
    for (double v : st.y_pfc) CHECK(v == 0.0);
    for (double v : st.y_mo) CHECK(v == Catch::Approx(1.0 / cfg.mo.group_size).margin(1e-15));
    // decoded action of a fresh state is the midpoint of every range
    const std::vector<double> decoded = decode_analog(st.y_mo, cfg.mo);
    for (int g = 0; g < cfg.mo.group_count; ++g) {
        const auto [lo, hi] = cfg.mo.ranges[g];
        CHECK(decoded[g] == Catch::Approx((lo + hi) / 2.0).margin(1e-12));
    }
}

TEST_CASE("init_parameters determinism and distribution", "[network]") {
    const VMDNNConfig cfg = oracles::tiny_config();
    const ParameterSet a = init_parameters(cfg, 42, 1.0);
    const ParameterSet b = init_parameters(cfg, 42, 1.0);
    CHECK(a.to_flat() == b.to_flat());
    const ParameterSet c = init_parameters(cfg, 43, 1.0);
    CHECK(a.to_flat() != c.to_flat());

    const ParameterSet z = init_parameters(cfg, 42, 0.0);
    for (double v : z.to_flat()) CHECK(v == 0.0);

    // biases stay zero
    CHECK(a.b_pfc == std::vector<double>(4, 0.0));
    CHECK(a.k_vf.biases == std::vector<double>(2, 0.0));

    // empirical std of a large matrix: scale / (sqrt(3) * sqrt(fan_in))
    VMDNNConfig wide = cfg;
    wide.ms.neurons = 100;
    wide.mf.neurons = 100;
    const ParameterSet w = init_parameters(wide, 7, 1.0);
    double sq = 0.0;
    for (double v : w.w_mf_ms) sq += v * v;  // 10000 entries, fan_in = 100
    const double stddev = std::sqrt(sq / w.w_mf_ms.size());
    const double expected = 1.0 / (std::sqrt(3.0) * 10.0);
    CHECK(stddev == Catch::Approx(expected).epsilon(0.05));
}

TEST_CASE("forward_step with zero parameters", "[network]") {
    const VMDNNConfig cfg = oracles::tiny_config();
    const ParameterSet p = ParameterSet::zeros(cfg);
    Rng rng(5);
    const FeatureMapStack frame = oracles::random_frame(6, 8, rng);
    const NetworkState st = forward_step(cfg, p, init_state(cfg), frame);
    CHECK(st.t == 1);
    for (double v : st.v_vf.values) CHECK(v == 0.0);
    for (double v : st.y_pfc) CHECK(v == 0.0);
    for (double v : st.y_mf) CHECK(v == 0.0);
    for (double v : st.y_mo) CHECK(v == Catch::Approx(1.0 / cfg.mo.group_size).margin(1e-15));
}

TEST_CASE("forward_step equals the feedforward oracle when memoryless", "[network]") {
    const VMDNNConfig cfg = all_fast(oracles::tiny_config());
    Rng rng(71);
    const ParameterSet p = zero_recurrent(init_parameters(cfg, 19, 1.0));
    NetworkState state = init_state(cfg);
    NetworkState next;
    for (int i = 0; i < 100; ++i) {
        const FeatureMapStack frame = oracles::random_frame(6, 8, rng);
        forward_step_into(cfg, p, state, frame, next);
        std::swap(state, next);
        const auto oracle = oracles::feedforward_oracle(cfg, p, frame);
        for (std::size_t k = 0; k < oracle.v_vf.size(); ++k)
            CHECK(state.v_vf.values[k] == Catch::Approx(oracle.v_vf[k]).margin(1e-12));
        for (std::size_t k = 0; k < oracle.v_vs.size(); ++k)
            CHECK(state.v_vs.values[k] == Catch::Approx(oracle.v_vs[k]).margin(1e-12));
        for (std::size_t k = 0; k < oracle.y_pfc.size(); ++k)
            CHECK(state.y_pfc[k] == Catch::Approx(oracle.y_pfc[k]).margin(1e-12));
        for (std::size_t k = 0; k < oracle.y_ms.size(); ++k)
            CHECK(state.y_ms[k] == Catch::Approx(oracle.y_ms[k]).margin(1e-12));
        for (std::size_t k = 0; k < oracle.y_mf.size(); ++k)
            CHECK(state.y_mf[k] == Catch::Approx(oracle.y_mf[k]).margin(1e-12));
        for (std::size_t k = 0; k < oracle.y_mo.size(); ++k)
            CHECK(state.y_mo[k] == Catch::Approx(oracle.y_mo[k]).margin(1e-12));
    }
}

TEST_CASE("memoryless network permutes outputs with frames", "[network]") {
    const VMDNNConfig cfg = all_fast(oracles::tiny_config());
    Rng rng(73);
    const ParameterSet p = zero_recurrent(init_parameters(cfg, 29, 1.0));
    std::vector<FeatureMapStack> frames;
    for (int i = 0; i < 6; ++i) frames.push_back(oracles::random_frame(6, 8, rng));
    const Trajectory fwd = run_open_loop(cfg, p, frames);
    std::vector<FeatureMapStack> reversed(frames.rbegin(), frames.rend());
    const Trajectory rev = run_open_loop(cfg, p, reversed);
    for (std::size_t t = 0; t < frames.size(); ++t)
        for (std::size_t k = 0; k < fwd.steps[t].y_mo.size(); ++k)
            CHECK(fwd.steps[t].y_mo[k] ==
                  Catch::Approx(rev.steps[frames.size() - 1 - t].y_mo[k]).margin(1e-12));
}

TEST_CASE("M_F reads the pre-update M_S activation", "[network]") {
    const VMDNNConfig cfg = oracles::tiny_config();
    Rng rng(37);
    const ParameterSet p = init_parameters(cfg, 59, 1.0);
    const FeatureMapStack frame = oracles::random_frame(6, 8, rng);
    NetworkState st = init_state(cfg);
    st = forward_step(cfg, p, st, frame);

    // perturbing y_ms in the pre-step state must shift u_mf (it is a declared
    // t-1 input), while perturbing the state's own post-update u_ms path
    // within the SAME step must not: run the same step twice, once normally
    // and once with w_ms_pfc scaled so the current-step M_S update changes,
    // and check u_mf is identical.
    ParameterSet p2 = p;
    for (double& w : p2.w_ms_pfc) w *= 2.0;
    const NetworkState a = forward_step(cfg, p, st, frame);
    const NetworkState b = forward_step(cfg, p2, st, frame);
    bool ms_changed = false;
    for (std::size_t i = 0; i < a.u_ms.size(); ++i)
        if (a.u_ms[i] != b.u_ms[i]) ms_changed = true;
    CHECK(ms_changed);
    for (std::size_t i = 0; i < a.u_mf.size(); ++i) CHECK(a.u_mf[i] == b.u_mf[i]);

    // and the declared t-1 path does act: perturb the previous y_ms
    NetworkState st_perturbed = st;
    for (double& v : st_perturbed.y_ms) v += 0.1;
    const NetworkState c = forward_step(cfg, p, st_perturbed, frame);
    bool mf_changed = false;
    for (std::size_t i = 0; i < a.u_mf.size(); ++i)
        if (a.u_mf[i] != c.u_mf[i]) mf_changed = true;
    CHECK(mf_changed);
}

TEST_CASE("activations stay bounded and groups normalized", "[network]") {
    const VMDNNConfig cfg = oracles::tiny_config();
    Rng rng(83);
    const ParameterSet p = init_parameters(cfg, 61, 2.0);
    NetworkState st = init_state(cfg);
    for (int t = 0; t < 50; ++t) {
        st = forward_step(cfg, p, st, oracles::random_frame(6, 8, rng));
        for (double v : st.v_vf.values) CHECK(std::abs(v) < 1.7159);
        for (double v : st.v_vs.values) CHECK(std::abs(v) < 1.7159);
        for (double v : st.y_pfc) CHECK(std::abs(v) < 1.7159);
        for (double v : st.y_ms) CHECK(std::abs(v) < 1.7159);
        for (double v : st.y_mf) CHECK(std::abs(v) < 1.7159);
        for (int g = 0; g < cfg.mo.group_count; ++g) {
            double sum = 0.0;
            for (int i = 0; i < cfg.mo.group_size; ++i)
                sum += st.y_mo[static_cast<std::size_t>(g) * cfg.mo.group_size + i];
            CHECK(sum == Catch::Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("forward_step is deterministic", "[network]") {
    const VMDNNConfig cfg = oracles::tiny_config();
    Rng rng(97);
    const ParameterSet p = init_parameters(cfg, 3, 1.0);
    const FeatureMapStack frame = oracles::random_frame(6, 8, rng);
    const NetworkState st0 = init_state(cfg);
    const NetworkState a = forward_step(cfg, p, st0, frame);
    const NetworkState b = forward_step(cfg, p, st0, frame);
    CHECK(a.u_pfc == b.u_pfc);
    CHECK(a.y_mo == b.y_mo);
    CHECK(a.u_vf.values == b.u_vf.values);
}

TEST_CASE("slow V_S approaches its fixed point geometrically", "[network]") {
    VMDNNConfig cfg = oracles::tiny_config();
    cfg.vision_mode = VisionMode::MSTNN;  // V_F tau 1, V_S tau 15
    Rng rng(101);
    const ParameterSet p = init_parameters(cfg, 13, 1.0);
    const FeatureMapStack frame = oracles::random_frame(6, 8, rng);
    NetworkState s0 = init_state(cfg);
    const NetworkState s1 = forward_step(cfg, p, s0, frame);
    const NetworkState s2 = forward_step(cfg, p, s1, frame);
    const NetworkState s3 = forward_step(cfg, p, s2, frame);
    auto delta = [](const NetworkState& a, const NetworkState& b) {
        double sq = 0.0;
        for (std::size_t i = 0; i < a.u_vs.values.size(); ++i) {
            const double d = a.u_vs.values[i] - b.u_vs.values[i];
            sq += d * d;
        }
        return std::sqrt(sq);
    };
    CHECK(delta(s2, s1) < delta(s1, s0));
    CHECK(delta(s3, s2) < delta(s2, s1));
}

TEST_CASE("open-loop rollout definition and determinism", "[network]") {
    const VMDNNConfig cfg = oracles::tiny_config();
    Rng rng(103);
    const ParameterSet p = init_parameters(cfg, 17, 1.0);
    std::vector<FeatureMapStack> frames;
    for (int i = 0; i < 5; ++i) frames.push_back(oracles::random_frame(6, 8, rng));

    const Trajectory single = run_open_loop(cfg, p, std::span(frames.data(), 1));
    CHECK(single.steps.size() == 1);

    const Trajectory traj = run_open_loop(cfg, p, frames);
    CHECK(traj.steps.size() == frames.size());

    // identical to stepping manually
    NetworkState st = init_state(cfg);
    for (std::size_t t = 0; t < frames.size(); ++t) {
        st = forward_step(cfg, p, st, frames[t]);
        CHECK(st.y_mo == traj.steps[t].y_mo);
    }

    const Trajectory again = run_open_loop(cfg, p, frames);
    for (std::size_t t = 0; t < frames.size(); ++t)
        CHECK(again.steps[t].y_mo == traj.steps[t].y_mo);
}

namespace {

/// Environment with a fixed frame that ignores actions.
struct FixedFrameEnv final : Environment {
    FeatureMapStack frame;
    explicit FixedFrameEnv(FeatureMapStack f) : frame(std::move(f)) {}
    FeatureMapStack render(int) override { return frame; }
    std::vector<double> apply(const std::vector<double>& action) override { return action; }
};

}  // namespace

TEST_CASE("closed-loop rollout with occlusion schedules", "[network]") {
    const VMDNNConfig cfg = oracles::tiny_config();
    Rng rng(107);
    const ParameterSet p = init_parameters(cfg, 23, 1.0);
    const FeatureMapStack frame = oracles::random_frame(6, 8, rng);

    SECTION("onset >= horizon leaves the trajectory untouched") {
        FixedFrameEnv env1(frame), env2(frame);
        const Trajectory base = run_closed_loop(cfg, p, env1, 8);
        OcclusionSchedule occ;
        occ.onset = 8;
        const Trajectory same = run_closed_loop(cfg, p, env2, 8, occ);
        for (int t = 0; t < 8; ++t) CHECK(base.steps[t].y_mo == same.steps[t].y_mo);
    }

    SECTION("onset 0 makes every frame neutral") {
        FixedFrameEnv env1(frame);
        OcclusionSchedule occ;
        occ.onset = 0;
        const Trajectory occluded = run_closed_loop(cfg, p, env1, 8, occ);
        // equals an open-loop run on all-zero frames
        std::vector<FeatureMapStack> zeros(8, FeatureMapStack(1, 6, 8, 0.0));
        const Trajectory ref = run_open_loop(cfg, p, zeros);
        for (int t = 0; t < 8; ++t) CHECK(occluded.steps[t].y_mo == ref.steps[t].y_mo);
    }

    SECTION("an action-ignoring fixed-frame env equals open loop") {
        FixedFrameEnv env(frame);
        const Trajectory closed = run_closed_loop(cfg, p, env, 6);
        std::vector<FeatureMapStack> frames(6, frame);
        const Trajectory open = run_open_loop(cfg, p, frames);
        for (int t = 0; t < 6; ++t) CHECK(closed.steps[t].y_mo == open.steps[t].y_mo);
    }
}

TEST_CASE("forward_step reports the diverging layer and step", "[network]") {
    const VMDNNConfig cfg = oracles::tiny_config();
    ParameterSet p = ParameterSet::zeros(cfg);
    p.b_ms[0] = std::numeric_limits<double>::quiet_NaN();
    Rng rng(113);
    const FeatureMapStack frame = oracles::random_frame(6, 8, rng);
    try {
        forward_step(cfg, p, init_state(cfg), frame);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.layer() == "M_S");
        CHECK(e.step() == 1);
    }
}
