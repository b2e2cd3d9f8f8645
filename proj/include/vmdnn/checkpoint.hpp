#pragma once

// Versioned binary checkpoint of (config, parameters).
//
// Byte layout, all integers little-endian:
//   offset 0   : magic "VMDNN\0" (6 bytes)
//   offset 6   : format version, u16 (currently 1)
//   offset 8   : config blob length L, u32
//   offset 12  : config JSON blob, L bytes
//   12 + L     : parameter count N, u64
//   20 + L     : N float64 values in canonical ParameterSet order
//   20+L+8N    : CRC-64/ECMA-182 of all preceding bytes, u64

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vmdnn/errors.hpp"
#include "vmdnn/network.hpp"

namespace vmdnn {

inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[6] = {'V', 'M', 'D', 'N', 'N', '\0'};

inline std::uint64_t crc64(const void* data, std::size_t len, std::uint64_t crc = 0) {
    // CRC-64/ECMA-182, bit-reversed table variant
    static const std::array<std::uint64_t, 256> table = [] {
        std::array<std::uint64_t, 256> t{};
        const std::uint64_t poly = 0xC96C5795D7870F42ULL;  // reflected 0x42F0E1EBA9EA3693
        for (std::uint64_t i = 0; i < 256; ++i) {
            std::uint64_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? (c >> 1) ^ poly : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    const auto* p = static_cast<const unsigned char*>(data);
    crc = ~crc;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

// --- config <-> JSON ---------------------------------------------------

inline nlohmann::json to_json(const ConvLayerSpec& c) {
    return {{"maps", c.maps}, {"kh", c.kh}, {"kw", c.kw}, {"stride", c.stride}, {"tau", c.tau}};
}

inline ConvLayerSpec conv_layer_from_json(const nlohmann::json& j) {
    return ConvLayerSpec{j.at("maps").get<int>(), j.at("kh").get<int>(), j.at("kw").get<int>(),
                         j.at("stride").get<int>(), j.at("tau").get<double>()};
}

inline nlohmann::json to_json(const SoftmaxGroupSpec& spec) {
    nlohmann::json ranges = nlohmann::json::array();
    for (const auto& [lo, hi] : spec.ranges) ranges.push_back({lo, hi});
    return {{"group_count", spec.group_count},
            {"group_size", spec.group_size},
            {"ranges", ranges},
            {"sigma", spec.sigma}};
}

inline SoftmaxGroupSpec softmax_spec_from_json(const nlohmann::json& j) {
    SoftmaxGroupSpec spec;
    spec.group_count = j.at("group_count").get<int>();
    spec.group_size = j.at("group_size").get<int>();
    for (const auto& r : j.at("ranges"))
        spec.ranges.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
    spec.sigma = j.at("sigma").get<double>();
    return spec;
}

inline nlohmann::json to_json(const VMDNNConfig& cfg) {
    return {{"input_height", cfg.input_height},
            {"input_width", cfg.input_width},
            {"vf", to_json(cfg.vf)},
            {"vs", to_json(cfg.vs)},
            {"pfc", {{"neurons", cfg.pfc_neurons},
                     {"kh", cfg.pfc_kh},
                     {"kw", cfg.pfc_kw},
                     {"tau", cfg.pfc_tau}}},
            {"ms", {{"neurons", cfg.ms.neurons}, {"tau", cfg.ms.tau}}},
            {"mf", {{"neurons", cfg.mf.neurons}, {"tau", cfg.mf.tau}}},
            {"mo", to_json(cfg.mo)},
            {"mo_tau", cfg.mo_tau},
            {"vision_mode", to_string(cfg.vision_mode)},
            {"pfc_mode", to_string(cfg.pfc_mode)}};
}

inline VMDNNConfig config_from_json(const nlohmann::json& j) {
    VMDNNConfig cfg;
    cfg.input_height = j.at("input_height").get<int>();
    cfg.input_width = j.at("input_width").get<int>();
    cfg.vf = conv_layer_from_json(j.at("vf"));
    cfg.vs = conv_layer_from_json(j.at("vs"));
    const auto& pfc = j.at("pfc");
    cfg.pfc_neurons = pfc.at("neurons").get<int>();
    cfg.pfc_kh = pfc.at("kh").get<int>();
    cfg.pfc_kw = pfc.at("kw").get<int>();
    cfg.pfc_tau = pfc.at("tau").get<double>();
    cfg.ms = {j.at("ms").at("neurons").get<int>(), j.at("ms").at("tau").get<double>()};
    cfg.mf = {j.at("mf").at("neurons").get<int>(), j.at("mf").at("tau").get<double>()};
    cfg.mo = softmax_spec_from_json(j.at("mo"));
    cfg.mo_tau = j.at("mo_tau").get<double>();
    cfg.vision_mode =
        j.at("vision_mode").get<std::string>() == "CNN" ? VisionMode::CNN : VisionMode::MSTNN;
    cfg.pfc_mode =
        j.at("pfc_mode").get<std::string>() == "FAST" ? PfcMode::FAST : PfcMode::SLOW;
    return cfg;
}

// --- save / load --------------------------------------------------------

namespace detail {

template <typename T>
void append_le(std::vector<unsigned char>& buf, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));  // x86-64: native order is little-endian
    buf.insert(buf.end(), raw, raw + sizeof(T));
}

template <typename T>
T read_le(const std::vector<unsigned char>& buf, std::size_t off) {
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    return v;
}

}  // namespace detail

inline void save_checkpoint(const VMDNNConfig& cfg, const ParameterSet& params,
                            const std::filesystem::path& path) {
    const std::string config_blob = to_json(cfg).dump();
    const std::vector<double> flat = params.to_flat();

    std::vector<unsigned char> buf;
    buf.reserve(32 + config_blob.size() + flat.size() * sizeof(double));
    buf.insert(buf.end(), kCheckpointMagic, kCheckpointMagic + sizeof(kCheckpointMagic));
    detail::append_le<std::uint16_t>(buf, kCheckpointVersion);
    detail::append_le<std::uint32_t>(buf, static_cast<std::uint32_t>(config_blob.size()));
    buf.insert(buf.end(), config_blob.begin(), config_blob.end());
    detail::append_le<std::uint64_t>(buf, static_cast<std::uint64_t>(flat.size()));
    for (double x : flat) detail::append_le<double>(buf, x);
    detail::append_le<std::uint64_t>(buf, crc64(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) throw CheckpointError("short write to " + path.string());
}

inline std::pair<VMDNNConfig, ParameterSet> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());

    const std::size_t header = sizeof(kCheckpointMagic) + 2 + 4;
    if (buf.size() < header)
        throw CheckpointTruncationError("checkpoint shorter than its header");
    if (std::memcmp(buf.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
        throw CheckpointFormatError("bad magic bytes");
    const auto version = detail::read_le<std::uint16_t>(buf, 6);
    if (version != kCheckpointVersion)
        throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version));
    const auto config_len = detail::read_le<std::uint32_t>(buf, 8);
    if (buf.size() < header + config_len + 8)
        throw CheckpointTruncationError("checkpoint truncated inside the config blob");
    const auto count = detail::read_le<std::uint64_t>(buf, header + config_len);
    const std::size_t total = header + config_len + 8 + count * sizeof(double) + 8;
    if (buf.size() < total)
        throw CheckpointTruncationError("checkpoint truncated inside the parameter array");
    if (buf.size() > total)
        throw CheckpointFormatError("trailing bytes after the checksum");

    const auto stored_crc = detail::read_le<std::uint64_t>(buf, total - 8);
    if (crc64(buf.data(), total - 8) != stored_crc)
        throw CheckpointChecksumError("checksum mismatch");

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf.begin() + header, buf.begin() + header + config_len);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointFormatError(std::string("config blob is not valid JSON: ") + e.what());
    }
    VMDNNConfig cfg;
    try {
        cfg = config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointFormatError(std::string("config blob missing fields: ") + e.what());
    }

    ParameterSet params = ParameterSet::zeros(cfg);
    if (params.count() != count)
        throw CheckpointFormatError("parameter count " + std::to_string(count) +
                                    " does not match the stored config (" +
                                    std::to_string(params.count()) + ")");
    std::vector<double> flat(count);
    std::memcpy(flat.data(), buf.data() + header + config_len + 8, count * sizeof(double));
    params.from_flat(flat);
    return {cfg, params};
}

}  // namespace vmdnn
