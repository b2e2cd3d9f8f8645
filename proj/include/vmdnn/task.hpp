#pragma once

// Deterministic desk-scale gesture-to-grasp task. A trial shows an animated
// gesture (a dot sweeping along a track; the sweep direction encodes the
// class, so single frames are ambiguous within a track pair), then a
// workspace holding one tall and one wide rectangle. A scripted teacher
// dwells on the workspace, attends to the gesture-indicated target, reaches
// with a rate-limited arm and closes the grasp while foveating. Everything
// is a pure function of (trial, pose, t); datasets are deterministic in
// their seed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "vmdnn/errors.hpp"
#include "vmdnn/network.hpp"
#include "vmdnn/numerics.hpp"
#include "vmdnn/rng.hpp"
#include "vmdnn/training.hpp"

namespace vmdnn::task {

enum class GestureClass { LEFT = 0, RIGHT = 1, TALL = 2, WIDE = 3 };
enum class ObjectKind { TALL = 0, WIDE = 1 };
enum class Split { TR, OBJ, SUB, OBJxSUB };

inline std::string to_string(GestureClass g) {
    switch (g) {
        case GestureClass::LEFT: return "LEFT";
        case GestureClass::RIGHT: return "RIGHT";
        case GestureClass::TALL: return "TALL";
        case GestureClass::WIDE: return "WIDE";
    }
    return "?";
}

inline std::string to_string(ObjectKind k) { return k == ObjectKind::TALL ? "TALL" : "WIDE"; }

inline std::string to_string(Split s) {
    switch (s) {
        case Split::TR: return "TR";
        case Split::OBJ: return "OBJ";
        case Split::SUB: return "SUB";
        case Split::OBJxSUB: return "OBJxSUB";
    }
    return "?";
}

/// Procedural gesture style standing in for a human demonstrator: sweep
/// speed and amplitude multipliers plus a start-phase offset in frames.
struct SubjectStyle {
    double speed = 1.0;
    double amplitude = 1.0;
    double phase = 0.0;
};

inline std::array<SubjectStyle, 4> train_styles() {
    return {SubjectStyle{1.0, 1.0, 0.0}, SubjectStyle{0.85, 0.9, 1.0},
            SubjectStyle{1.2, 0.8, 0.5}, SubjectStyle{1.1, 0.95, 1.5}};
}

inline SubjectStyle holdout_style() { return SubjectStyle{0.95, 0.85, 0.9}; }

struct ObjectSpec {
    ObjectKind kind = ObjectKind::TALL;
    double x = 0.5;
    double y = 0.5;
    double orientation_deg = 0.0;
};

struct TrialSpec {
    GestureClass gesture = GestureClass::LEFT;
    SubjectStyle style;
    std::vector<ObjectSpec> objects;  // one TALL + one WIDE; a single object when gestureless
    int gesture_len = 0;
    int horizon = 0;
    Split split = Split::TR;
    bool gestureless = false;
    int id = 0;
};

struct AgentPose {
    double gaze_x = 0.5, gaze_y = 0.5;
    double arm_x = 0.5, arm_y = 0.5;
    double grasp = 1.0;
    double foveation = 1.0;

    std::vector<double> to_vector() const {
        return {gaze_x, gaze_y, arm_x, arm_y, grasp, foveation};
    }
    static AgentPose from_vector(std::span<const double> v) {
        if (v.size() != 6) throw ConfigError("AgentPose: expected 6 values");
        return AgentPose{v[0], v[1], v[2], v[3], v[4], v[5]};
    }
};

inline constexpr int kPoseDim = 6;  // gaze_x, gaze_y, arm_x, arm_y, grasp, foveation

struct TaskGeometry {
    int frame_height = 12;
    int frame_width = 16;
    int gesture_len = 10;
    int dwell_len = 4;   // gaze parked on the workspace center
    int attend_len = 4;  // gaze on the target, arm still parked
    int reach_len = 12;
    int grasp_len = 6;
    double success_radius = 0.08;  // of workspace width
    double arm_rate = 0.1;         // arm slew per step
    int grid_cols = 3;
    int grid_rows = 2;
    double object_w = 0.09;   // tall object footprint; the wide object swaps w/h
    double object_h = 0.20;
    double gesture_sweep = 12.0;  // frames for a full sweep at speed 1
    double blob_radius = 0.07;
    double marker_half = 0.03;
    double marker_gain = 0.7;
    double min_fov_scale = 0.35;  // view scale at maximum foveation
    double arm_park_x = 0.5;
    double arm_park_y = 0.9;
    double grasp_lo = 1.0, grasp_hi = 10.0;
    double fov_lo = 1.0, fov_hi = 10.0;

    int horizon() const { return gesture_len + dwell_len + attend_len + reach_len + grasp_len; }
    int gestureless_horizon() const { return horizon() - gesture_len; }

    double grid_x(int col) const {
        return (col + 1) / static_cast<double>(grid_cols + 1);
    }
    double grid_y(int row) const {
        // symmetric about 0.5, kept inside the full-view band
        const double lo = 0.3125, hi = 0.6875;
        if (grid_rows == 1) return 0.5;
        return lo + (hi - lo) * row / static_cast<double>(grid_rows - 1);
    }
};

inline constexpr std::array<double, 5> kOrientations = {-45.0, -22.5, 0.0, 22.5, 45.0};

/// Group layout of the M_O output: one softmax group per pose field.
inline SoftmaxGroupSpec pose_codec(const TaskGeometry& geom, int group_size = 10,
                                   double sigma = 0.05) {
    SoftmaxGroupSpec spec;
    spec.group_count = kPoseDim;
    spec.group_size = group_size;
    spec.sigma = sigma;
    spec.ranges = {{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0},
                   {geom.grasp_lo, geom.grasp_hi}, {geom.fov_lo, geom.fov_hi}};
    return spec;
}

inline AgentPose home_pose(const TaskGeometry& geom) {
    AgentPose p;
    p.gaze_x = 0.5;
    p.gaze_y = 0.5;
    p.arm_x = geom.arm_park_x;
    p.arm_y = geom.arm_park_y;
    p.grasp = geom.grasp_lo;
    p.foveation = geom.fov_lo;
    return p;
}

struct PhaseTimes {
    int workspace_onset = 0;  // first workspace frame
    int attend_onset = 0;     // gaze jumps to the target
    int observe_onset = 0;    // mid-attend: the target is being observed
    int reach_onset = 0;
    int grasp_onset = 0;
    int end = 0;
};

inline PhaseTimes phase_times(const TaskGeometry& geom, const TrialSpec& trial) {
    PhaseTimes ph;
    ph.workspace_onset = trial.gestureless ? 0 : trial.gesture_len;
    ph.attend_onset = ph.workspace_onset + geom.dwell_len;
    ph.observe_onset = ph.attend_onset + geom.attend_len / 2;
    ph.reach_onset = ph.attend_onset + geom.attend_len;
    ph.grasp_onset = ph.reach_onset + geom.reach_len;
    ph.end = trial.horizon;
    return ph;
}

/// The five probe onsets of the occlusion protocol: workspace observation,
/// attending to the target, observing the target, reach onset, mid-reach.
inline std::vector<int> occlusion_points(const TaskGeometry& geom, const TrialSpec& trial) {
    const PhaseTimes ph = phase_times(geom, trial);
    return {ph.workspace_onset, ph.attend_onset, ph.observe_onset, ph.reach_onset,
            ph.reach_onset + geom.reach_len / 2};
}

/// Index into trial.objects of the object the gesture designates.
inline int target_index(const TrialSpec& trial) {
    if (trial.objects.empty()) throw ConfigError("trial has no objects");
    if (trial.objects.size() == 1) return 0;
    const ObjectSpec& a = trial.objects[0];
    const ObjectSpec& b = trial.objects[1];
    switch (trial.gesture) {
        case GestureClass::LEFT: return a.x < b.x ? 0 : 1;
        case GestureClass::RIGHT: return a.x > b.x ? 0 : 1;
        case GestureClass::TALL: return a.kind == ObjectKind::TALL ? 0 : 1;
        case GestureClass::WIDE: return a.kind == ObjectKind::WIDE ? 0 : 1;
    }
    return 0;
}

// --- rendering -----------------------------------------------------------

namespace detail {

/// Sweep progress in [0, 1]; incomplete at the clip end for every training
/// style so the final frame does not reveal the direction on its own.
inline double sweep_progress(const TaskGeometry& geom, const SubjectStyle& style, int t) {
    const double p = style.speed * (t - style.phase) / geom.gesture_sweep;
    return std::clamp(p, 0.0, 1.0);
}

/// Blob center offset from the track midpoint. The same magnitude is used
/// for both members of a track pair with opposite signs, which makes the
/// LEFT/RIGHT pair exact pixel mirrors of each other.
inline double sweep_offset(const TaskGeometry& geom, const SubjectStyle& style, int t) {
    return 0.4 * style.amplitude * (1.0 - 2.0 * sweep_progress(geom, style, t));
}

inline bool point_in_object(const ObjectSpec& obj, const TaskGeometry& geom, double wx,
                            double wy) {
    const double rad = obj.orientation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const double dx = wx - obj.x, dy = wy - obj.y;
    const double u = c * dx + s * dy;
    const double v = -s * dx + c * dy;
    const double hw = (obj.kind == ObjectKind::TALL ? geom.object_w : geom.object_h) * 0.5;
    const double hh = (obj.kind == ObjectKind::TALL ? geom.object_h : geom.object_w) * 0.5;
    return std::abs(u) <= hw && std::abs(v) <= hh;
}

}  // namespace detail

/// Renders the frame for step t: the gesture pane while t < G (independent
/// of the pose), afterwards the workspace seen through a virtual camera
/// centered on the gaze whose field of view shrinks linearly with the
/// foveation level. Values lie in [-1, 1]; the function is bit-deterministic
/// in its arguments.
inline FeatureMapStack render(const TaskGeometry& geom, const TrialSpec& trial,
                              const AgentPose& pose, int t) {
    const int H = geom.frame_height, W = geom.frame_width;
    FeatureMapStack frame(1, H, W, -1.0);
    const int G = trial.gestureless ? 0 : trial.gesture_len;

    if (t < G) {
        const double q = detail::sweep_offset(geom, trial.style, t);
        const double r2 = 2.0 * geom.blob_radius * geom.blob_radius;
        // sign of the offset along the track: LEFT/TALL start on the + side
        const bool horizontal =
            trial.gesture == GestureClass::LEFT || trial.gesture == GestureClass::RIGHT;
        const double side =
            (trial.gesture == GestureClass::LEFT || trial.gesture == GestureClass::TALL) ? 1.0
                                                                                         : -1.0;
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c) {
                const double ex = (c + 0.5) / W - 0.5;
                const double ey = (r + 0.5) / H - 0.5;
                const double dx = horizontal ? ex - side * q : ex;
                const double dy = horizontal ? ey : ey - side * q;
                frame.at(0, r, c) = -1.0 + 2.0 * std::exp(-(dx * dx + dy * dy) / r2);
            }
        }
        return frame;
    }

    // workspace pane
    const double fov = std::clamp(pose.foveation, geom.fov_lo, geom.fov_hi);
    const double scale = 1.0 - (fov - geom.fov_lo) / (geom.fov_hi - geom.fov_lo) *
                                   (1.0 - geom.min_fov_scale);
    const double hx = 0.5 * scale;
    const double hy = 0.5 * scale * static_cast<double>(H) / W;
    constexpr int kSub = 2;  // 2x2 supersampling
    constexpr double kSubOff[kSub] = {0.25, 0.75};
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            double acc = 0.0;
            for (int sr = 0; sr < kSub; ++sr) {
                for (int sc = 0; sc < kSub; ++sc) {
                    const double fx = (c + kSubOff[sc]) / W;
                    const double fy = (r + kSubOff[sr]) / H;
                    const double wx = pose.gaze_x + (fx - 0.5) * 2.0 * hx;
                    const double wy = pose.gaze_y + (fy - 0.5) * 2.0 * hy;
                    double intensity = 0.0;
                    for (const ObjectSpec& obj : trial.objects)
                        if (detail::point_in_object(obj, geom, wx, wy)) intensity = 1.0;
                    if (std::abs(wx - pose.arm_x) <= geom.marker_half &&
                        std::abs(wy - pose.arm_y) <= geom.marker_half)
                        intensity = std::max(intensity, geom.marker_gain);
                    acc += intensity;
                }
            }
            frame.at(0, r, c) = -1.0 + 2.0 * acc / (kSub * kSub);
        }
    }
    return frame;
}

// --- teacher ---------------------------------------------------------------

/// Scripted ideal behavior: home pose through the gesture, a dwell on the
/// workspace center, gaze jump to the target, a linear reach with a
/// foveation ramp, then a grasp ramp. Depends only on the resolved target.
inline AgentPose teacher_policy(const TaskGeometry& geom, const TrialSpec& trial, int t) {
    if (t < 0 || t >= trial.horizon) throw ConfigError("teacher_policy: t out of range");
    const PhaseTimes ph = phase_times(geom, trial);
    AgentPose pose = home_pose(geom);
    if (t < ph.workspace_onset) return pose;  // observing the gesture

    const ObjectSpec& target = trial.objects[static_cast<std::size_t>(target_index(trial))];
    if (t >= ph.attend_onset) {
        pose.gaze_x = target.x;
        pose.gaze_y = target.y;
    }
    if (t >= ph.reach_onset) {
        const double alpha =
            std::min(1.0, (t - ph.reach_onset + 1) / static_cast<double>(geom.reach_len));
        if (alpha >= 1.0) {
            pose.arm_x = target.x;
            pose.arm_y = target.y;
        } else {
            pose.arm_x = geom.arm_park_x + (target.x - geom.arm_park_x) * alpha;
            pose.arm_y = geom.arm_park_y + (target.y - geom.arm_park_y) * alpha;
        }
        pose.foveation =
            geom.fov_lo + (geom.fov_hi - geom.fov_lo) * std::min(1.0, alpha);
    }
    if (t >= ph.grasp_onset) {
        pose.foveation = geom.fov_hi;
        const double beta =
            std::min(1.0, (t - ph.grasp_onset + 1) / static_cast<double>(geom.grasp_len));
        pose.grasp = geom.grasp_lo + (geom.grasp_hi - geom.grasp_lo) * beta;
    }
    return pose;
}

// --- trial sampling --------------------------------------------------------

namespace detail {

inline SubjectStyle jitter_style(SubjectStyle base, Rng& rng) {
    base.speed += rng.uniform(-0.04, 0.04);
    base.amplitude += rng.uniform(-0.04, 0.04);
    base.phase += rng.uniform(-0.3, 0.3);
    if (base.phase < 0.0) base.phase = 0.0;
    return base;
}

// Grid cells in distinct columns so LEFT/RIGHT always resolve.
inline std::pair<ObjectSpec, ObjectSpec> place_on_grid(const TaskGeometry& geom, Rng& rng) {
    const int col_a = static_cast<int>(rng.uniform_index(geom.grid_cols));
    int col_b = static_cast<int>(rng.uniform_index(geom.grid_cols - 1));
    if (col_b >= col_a) ++col_b;
    const int row_a = static_cast<int>(rng.uniform_index(geom.grid_rows));
    const int row_b = static_cast<int>(rng.uniform_index(geom.grid_rows));
    ObjectSpec a{ObjectKind::TALL, geom.grid_x(col_a), geom.grid_y(row_a),
                 kOrientations[rng.uniform_index(kOrientations.size())]};
    ObjectSpec b{ObjectKind::WIDE, geom.grid_x(col_b), geom.grid_y(row_b),
                 kOrientations[rng.uniform_index(kOrientations.size())]};
    return {a, b};
}

inline std::pair<ObjectSpec, ObjectSpec> place_continuous(const TaskGeometry& geom, Rng& rng) {
    for (;;) {
        ObjectSpec a{ObjectKind::TALL, rng.uniform(0.18, 0.82), rng.uniform(0.28, 0.72),
                     rng.uniform(-45.0, 45.0)};
        ObjectSpec b{ObjectKind::WIDE, rng.uniform(0.18, 0.82), rng.uniform(0.28, 0.72),
                     rng.uniform(-45.0, 45.0)};
        const double dx = a.x - b.x, dy = a.y - b.y;
        if (std::abs(dx) >= 0.22 && dx * dx + dy * dy >= 0.26 * 0.26) return {a, b};
    }
}

}  // namespace detail

/// Balanced trial set: gesture classes cycle i mod 4; positions and styles
/// follow the split (TR: grid + training styles, OBJ: continuous placements,
/// SUB: held-out style on the grid, OBJxSUB: both).
inline std::vector<TrialSpec> sample_trials(const TaskGeometry& geom, Rng& rng, Split split,
                                            int n, bool gestureless = false) {
    if (n < 1) throw ConfigError("sample_trials: n must be >= 1");
    std::vector<TrialSpec> trials;
    trials.reserve(static_cast<std::size_t>(n));
    const auto styles = train_styles();
    for (int i = 0; i < n; ++i) {
        TrialSpec trial;
        trial.id = i;
        trial.split = split;
        trial.gestureless = gestureless;
        trial.gesture = static_cast<GestureClass>(i % 4);
        trial.gesture_len = gestureless ? 0 : geom.gesture_len;
        trial.horizon = gestureless ? geom.gestureless_horizon() : geom.horizon();

        const bool novel_style = split == Split::SUB || split == Split::OBJxSUB;
        const SubjectStyle base =
            novel_style ? holdout_style() : styles[rng.uniform_index(styles.size())];
        trial.style = detail::jitter_style(base, rng);

        const bool continuous = split == Split::OBJ || split == Split::OBJxSUB;
        if (gestureless) {
            ObjectSpec obj{rng.uniform_index(2) == 0 ? ObjectKind::TALL : ObjectKind::WIDE,
                           geom.grid_x(static_cast<int>(rng.uniform_index(geom.grid_cols))),
                           geom.grid_y(static_cast<int>(rng.uniform_index(geom.grid_rows))),
                           kOrientations[rng.uniform_index(kOrientations.size())]};
            trial.objects = {obj};
        } else {
            auto [a, b] = continuous ? detail::place_continuous(geom, rng)
                                     : detail::place_on_grid(geom, rng);
            if (rng.uniform_index(2) == 0) std::swap(a, b);
            trial.objects = {a, b};
        }
        trials.push_back(std::move(trial));
    }
    return trials;
}

/// Single-trial variant with a random gesture class.
inline TrialSpec sample_trial(const TaskGeometry& geom, Rng& rng, Split split,
                              bool gestureless = false) {
    TrialSpec trial = sample_trials(geom, rng, split, 1, gestureless)[0];
    trial.gesture = static_cast<GestureClass>(rng.uniform_index(4));
    return trial;
}

// --- environment -----------------------------------------------------------

/// Closed-loop desk environment: gaze, foveation and grasp take commanded
/// values immediately, the arm slews toward the commanded point at most
/// `arm_rate` per step.
class TaskEnv final : public Environment {
public:
    TaskEnv(const TaskGeometry& geom, const TrialSpec& trial)
        : geom_(geom), trial_(trial), pose_(home_pose(geom)) {}

    FeatureMapStack render(int t) override { return task::render(geom_, trial_, pose_, t); }

    std::vector<double> apply(const std::vector<double>& action) override {
        AgentPose cmd = AgentPose::from_vector(action);
        pose_.gaze_x = std::clamp(cmd.gaze_x, 0.0, 1.0);
        pose_.gaze_y = std::clamp(cmd.gaze_y, 0.0, 1.0);
        pose_.grasp = std::clamp(cmd.grasp, geom_.grasp_lo, geom_.grasp_hi);
        pose_.foveation = std::clamp(cmd.foveation, geom_.fov_lo, geom_.fov_hi);
        const double tx = std::clamp(cmd.arm_x, 0.0, 1.0);
        const double ty = std::clamp(cmd.arm_y, 0.0, 1.0);
        const double dx = tx - pose_.arm_x, dy = ty - pose_.arm_y;
        const double dist = std::sqrt(dx * dx + dy * dy);
        if (dist <= geom_.arm_rate) {
            pose_.arm_x = tx;
            pose_.arm_y = ty;
        } else {
            pose_.arm_x += geom_.arm_rate * dx / dist;
            pose_.arm_y += geom_.arm_rate * dy / dist;
        }
        return pose_.to_vector();
    }

    const AgentPose& pose() const { return pose_; }
    const TrialSpec& trial() const { return trial_; }

private:
    TaskGeometry geom_;
    TrialSpec trial_;
    AgentPose pose_;
};

// --- scoring ----------------------------------------------------------------

enum class OutcomeLabel { SUCCESS, FAILURE_CONFUSION, FAILURE_OTHER };

inline std::string to_string(OutcomeLabel l) {
    switch (l) {
        case OutcomeLabel::SUCCESS: return "SUCCESS";
        case OutcomeLabel::FAILURE_CONFUSION: return "FAILURE_CONFUSION";
        case OutcomeLabel::FAILURE_OTHER: return "FAILURE_OTHER";
    }
    return "?";
}

struct Outcome {
    OutcomeLabel label = OutcomeLabel::FAILURE_OTHER;
    double final_distance = 0.0;  // effector to target center
    double final_grasp = 0.0;
};

/// SUCCESS iff the final effector lies within the success radius of the
/// target and the final grasp is >= 8; the same condition on the non-target
/// object scores as a confusion failure.
inline Outcome evaluate(const TaskGeometry& geom, const TrialSpec& trial,
                        const Trajectory& trajectory) {
    if (trajectory.steps.empty() || trajectory.steps.back().env_pose.empty())
        throw ConfigError("evaluate: needs a closed-loop trajectory with environment poses");
    const AgentPose final_pose = AgentPose::from_vector(trajectory.steps.back().env_pose);
    const int ti = target_index(trial);
    auto dist_to = [&](const ObjectSpec& obj) {
        const double dx = final_pose.arm_x - obj.x, dy = final_pose.arm_y - obj.y;
        return std::sqrt(dx * dx + dy * dy);
    };
    Outcome out;
    out.final_distance = dist_to(trial.objects[static_cast<std::size_t>(ti)]);
    out.final_grasp = final_pose.grasp;
    const bool grasping = final_pose.grasp >= 8.0;
    if (grasping && out.final_distance <= geom.success_radius) {
        out.label = OutcomeLabel::SUCCESS;
    } else if (trial.objects.size() == 2 && grasping &&
               dist_to(trial.objects[static_cast<std::size_t>(1 - ti)]) <=
                   geom.success_radius) {
        out.label = OutcomeLabel::FAILURE_CONFUSION;
    } else {
        out.label = OutcomeLabel::FAILURE_OTHER;
    }
    return out;
}

// --- datasets ----------------------------------------------------------------

/// Tutored sequence for one trial. The frame at step t reflects the pose
/// commanded at t-1 (visual feedback), so frames[t] = render(pose_{t-1}, t)
/// with pose_{-1} the home pose; targets encode the teacher pose at t.
inline SequenceSample make_sample(const TaskGeometry& geom, const SoftmaxGroupSpec& codec,
                                  const TrialSpec& trial) {
    SequenceSample sample;
    sample.trial_index = trial.id;
    sample.frames.reserve(static_cast<std::size_t>(trial.horizon));
    sample.targets.reserve(static_cast<std::size_t>(trial.horizon));
    AgentPose prev = home_pose(geom);
    for (int t = 0; t < trial.horizon; ++t) {
        sample.frames.push_back(render(geom, trial, prev, t));
        const AgentPose teach = teacher_policy(geom, trial, t);
        sample.targets.push_back(encode_analog(teach.to_vector(), codec));
        prev = teach;
    }
    return sample;
}

inline std::vector<SequenceSample> make_dataset(const TaskGeometry& geom,
                                                const SoftmaxGroupSpec& codec,
                                                const std::vector<TrialSpec>& trials) {
    std::vector<SequenceSample> samples;
    samples.reserve(trials.size());
    for (const TrialSpec& trial : trials) samples.push_back(make_sample(geom, codec, trial));
    return samples;
}

/// Labeled gesture animations for the classifier pre-training stage.
inline std::vector<GestureClip> make_gesture_clips(const TaskGeometry& geom, Rng& rng, int n,
                                                   bool holdout = false) {
    std::vector<GestureClip> clips;
    clips.reserve(static_cast<std::size_t>(n));
    const auto styles = train_styles();
    const AgentPose pose;  // gesture frames ignore the pose
    for (int i = 0; i < n; ++i) {
        TrialSpec trial;
        trial.gesture = static_cast<GestureClass>(i % 4);
        trial.gesture_len = geom.gesture_len;
        trial.horizon = geom.horizon();
        const SubjectStyle base =
            holdout ? holdout_style() : styles[rng.uniform_index(styles.size())];
        trial.style = detail::jitter_style(base, rng);
        trial.objects = {ObjectSpec{}};  // unused during the gesture pane
        GestureClip clip;
        clip.label = i % 4;
        clip.frames.reserve(static_cast<std::size_t>(geom.gesture_len));
        for (int t = 0; t < geom.gesture_len; ++t)
            clip.frames.push_back(render(geom, trial, pose, t));
        clips.push_back(std::move(clip));
    }
    return clips;
}

}  // namespace vmdnn::task
