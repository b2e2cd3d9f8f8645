#pragma once

// On-disk dataset layout: one directory per dataset holding manifest.json
// (seed, split tag, codec, trial specs) plus per-trial raw little-endian
// float64 files trial_NNNN/frames.f64 (T x H x W) and trial_NNNN/targets.f64
// (T x output_size). Gesture-clip sets use clip_NNNN/frames.f64 with labels
// in the manifest. Written bytes are deterministic in the seed.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vmdnn/checkpoint.hpp"
#include "vmdnn/errors.hpp"
#include "vmdnn/task.hpp"
#include "vmdnn/training.hpp"

namespace vmdnn {

inline nlohmann::json to_json(const task::SubjectStyle& s) {
    return {{"speed", s.speed}, {"amplitude", s.amplitude}, {"phase", s.phase}};
}

inline task::SubjectStyle style_from_json(const nlohmann::json& j) {
    return {j.at("speed").get<double>(), j.at("amplitude").get<double>(),
            j.at("phase").get<double>()};
}

inline nlohmann::json to_json(const task::ObjectSpec& o) {
    return {{"kind", task::to_string(o.kind)},
            {"x", o.x},
            {"y", o.y},
            {"orientation_deg", o.orientation_deg}};
}

inline task::ObjectSpec object_from_json(const nlohmann::json& j) {
    task::ObjectSpec o;
    o.kind = j.at("kind").get<std::string>() == "TALL" ? task::ObjectKind::TALL
                                                       : task::ObjectKind::WIDE;
    o.x = j.at("x").get<double>();
    o.y = j.at("y").get<double>();
    o.orientation_deg = j.at("orientation_deg").get<double>();
    return o;
}

inline task::Split split_from_string(const std::string& s) {
    if (s == "TR") return task::Split::TR;
    if (s == "OBJ") return task::Split::OBJ;
    if (s == "SUB") return task::Split::SUB;
    if (s == "OBJxSUB") return task::Split::OBJxSUB;
    throw ConfigError("unknown split tag '" + s + "'");
}

inline nlohmann::json to_json(const task::TrialSpec& t) {
    nlohmann::json objects = nlohmann::json::array();
    for (const auto& o : t.objects) objects.push_back(to_json(o));
    return {{"id", t.id},
            {"gesture", task::to_string(t.gesture)},
            {"style", to_json(t.style)},
            {"objects", objects},
            {"gesture_len", t.gesture_len},
            {"horizon", t.horizon},
            {"split", task::to_string(t.split)},
            {"gestureless", t.gestureless}};
}

inline task::TrialSpec trial_from_json(const nlohmann::json& j) {
    task::TrialSpec t;
    t.id = j.at("id").get<int>();
    const std::string g = j.at("gesture").get<std::string>();
    if (g == "LEFT") t.gesture = task::GestureClass::LEFT;
    else if (g == "RIGHT") t.gesture = task::GestureClass::RIGHT;
    else if (g == "TALL") t.gesture = task::GestureClass::TALL;
    else if (g == "WIDE") t.gesture = task::GestureClass::WIDE;
    else throw ConfigError("unknown gesture class '" + g + "'");
    t.style = style_from_json(j.at("style"));
    for (const auto& o : j.at("objects")) t.objects.push_back(object_from_json(o));
    t.gesture_len = j.at("gesture_len").get<int>();
    t.horizon = j.at("horizon").get<int>();
    t.split = split_from_string(j.at("split").get<std::string>());
    t.gestureless = j.at("gestureless").get<bool>();
    return t;
}

struct DatasetManifest {
    int schema_version = 1;
    std::uint64_t seed = 0;
    std::string split;
    bool gestureless = false;
    int frame_height = 0;
    int frame_width = 0;
    int output_size = 0;
    SoftmaxGroupSpec codec;
    std::vector<task::TrialSpec> trials;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<SequenceSample> samples;
};

namespace detail {

inline void write_f64(const std::filesystem::path& path, std::span<const double> values) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!out) throw ConfigError("short write to " + path.string());
}

inline std::vector<double> read_f64(const std::filesystem::path& path,
                                    std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::vector<double> values(expected_count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(expected_count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != expected_count * sizeof(double))
        throw ConfigError(path.string() + " is shorter than its manifest declares");
    return values;
}

inline std::string trial_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "trial_%04d", index);
    return buf;
}

inline std::string clip_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip_%04d", index);
    return buf;
}

}  // namespace detail

inline void write_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest,
                          const std::vector<SequenceSample>& samples) {
    if (manifest.trials.size() != samples.size())
        throw ConfigError("write_dataset: trials and samples differ in count");
    std::filesystem::create_directories(dir);

    nlohmann::json j;
    j["schema_version"] = manifest.schema_version;
    j["seed"] = manifest.seed;
    j["split"] = manifest.split;
    j["gestureless"] = manifest.gestureless;
    j["frame_height"] = manifest.frame_height;
    j["frame_width"] = manifest.frame_width;
    j["output_size"] = manifest.output_size;
    j["codec"] = to_json(manifest.codec);
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : manifest.trials) trials.push_back(to_json(t));
    j["trials"] = trials;
    {
        std::ofstream out(dir / "manifest.json", std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + (dir / "manifest.json").string());
        out << j.dump(2) << '\n';
    }

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const SequenceSample& s = samples[i];
        const std::filesystem::path tdir = dir / detail::trial_dir_name(static_cast<int>(i));
        std::filesystem::create_directories(tdir);
        std::vector<double> frames;
        frames.reserve(s.frames.size() * s.frames.front().size());
        for (const FeatureMapStack& f : s.frames)
            frames.insert(frames.end(), f.values.begin(), f.values.end());
        detail::write_f64(tdir / "frames.f64", frames);
        std::vector<double> targets;
        targets.reserve(s.targets.size() * s.targets.front().size());
        for (const OutputVector& t : s.targets)
            targets.insert(targets.end(), t.begin(), t.end());
        detail::write_f64(tdir / "targets.f64", targets);
    }
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw ConfigError("missing dataset manifest: " + (dir / "manifest.json").string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid dataset manifest: " + std::string(e.what()));
    }

    Dataset ds;
    ds.manifest.schema_version = j.at("schema_version").get<int>();
    if (ds.manifest.schema_version != 1)
        throw ConfigError("unsupported dataset schema version " +
                          std::to_string(ds.manifest.schema_version));
    ds.manifest.seed = j.at("seed").get<std::uint64_t>();
    ds.manifest.split = j.at("split").get<std::string>();
    ds.manifest.gestureless = j.at("gestureless").get<bool>();
    ds.manifest.frame_height = j.at("frame_height").get<int>();
    ds.manifest.frame_width = j.at("frame_width").get<int>();
    ds.manifest.output_size = j.at("output_size").get<int>();
    ds.manifest.codec = softmax_spec_from_json(j.at("codec"));
    for (const auto& t : j.at("trials")) ds.manifest.trials.push_back(trial_from_json(t));

    const int H = ds.manifest.frame_height, W = ds.manifest.frame_width;
    for (std::size_t i = 0; i < ds.manifest.trials.size(); ++i) {
        const task::TrialSpec& trial = ds.manifest.trials[i];
        const std::filesystem::path tdir = dir / detail::trial_dir_name(static_cast<int>(i));
        const std::size_t frame_sz = static_cast<std::size_t>(H) * W;
        const std::size_t T = static_cast<std::size_t>(trial.horizon);
        std::vector<double> frames = detail::read_f64(tdir / "frames.f64", T * frame_sz);
        std::vector<double> targets = detail::read_f64(
            tdir / "targets.f64", T * static_cast<std::size_t>(ds.manifest.output_size));
        SequenceSample s;
        s.trial_index = trial.id;
        for (std::size_t t = 0; t < T; ++t) {
            FeatureMapStack f(1, H, W);
            std::copy(frames.begin() + static_cast<std::ptrdiff_t>(t * frame_sz),
                      frames.begin() + static_cast<std::ptrdiff_t>((t + 1) * frame_sz),
                      f.values.begin());
            s.frames.push_back(std::move(f));
            s.targets.emplace_back(
                targets.begin() + static_cast<std::ptrdiff_t>(t * ds.manifest.output_size),
                targets.begin() + static_cast<std::ptrdiff_t>((t + 1) * ds.manifest.output_size));
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

inline void write_gesture_clips(const std::filesystem::path& dir,
                                const std::vector<GestureClip>& clips, std::uint64_t seed,
                                int frame_height, int frame_width) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["schema_version"] = 1;
    j["seed"] = seed;
    j["frame_height"] = frame_height;
    j["frame_width"] = frame_width;
    j["clip_len"] = clips.empty() ? 0 : static_cast<int>(clips.front().frames.size());
    nlohmann::json labels = nlohmann::json::array();
    for (const GestureClip& c : clips) labels.push_back(c.label);
    j["labels"] = labels;
    {
        std::ofstream out(dir / "manifest.json", std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + (dir / "manifest.json").string());
        out << j.dump(2) << '\n';
    }
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const std::filesystem::path cdir = dir / detail::clip_dir_name(static_cast<int>(i));
        std::filesystem::create_directories(cdir);
        std::vector<double> frames;
        for (const FeatureMapStack& f : clips[i].frames)
            frames.insert(frames.end(), f.values.begin(), f.values.end());
        detail::write_f64(cdir / "frames.f64", frames);
    }
}

inline std::vector<GestureClip> read_gesture_clips(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw ConfigError("missing clip manifest: " + (dir / "manifest.json").string());
    nlohmann::json j;
    in >> j;
    const int H = j.at("frame_height").get<int>(), W = j.at("frame_width").get<int>();
    const int L = j.at("clip_len").get<int>();
    std::vector<GestureClip> clips;
    int index = 0;
    for (const auto& label : j.at("labels")) {
        const std::filesystem::path cdir = dir / detail::clip_dir_name(index++);
        const std::size_t frame_sz = static_cast<std::size_t>(H) * W;
        std::vector<double> raw =
            detail::read_f64(cdir / "frames.f64", static_cast<std::size_t>(L) * frame_sz);
        GestureClip clip;
        clip.label = label.get<int>();
        for (int t = 0; t < L; ++t) {
            FeatureMapStack f(1, H, W);
            std::copy(raw.begin() + static_cast<std::ptrdiff_t>(t * frame_sz),
                      raw.begin() + static_cast<std::ptrdiff_t>((t + 1) * frame_sz),
                      f.values.begin());
            clip.frames.push_back(std::move(f));
        }
        clips.push_back(std::move(clip));
    }
    return clips;
}

}  // namespace vmdnn
