#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "vmdnn/checkpoint.hpp"

using namespace vmdnn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("vmdnn_ckpt_" + std::to_string(
                                    std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<unsigned char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("checkpoint roundtrip is bit-exact on the full-scale set", "[checkpoint]") {
    TempDir tmp;
    const VMDNNConfig cfg = oracles::full_scale_config();
    const ParameterSet params = init_parameters(cfg, 4242, 1.0);
    REQUIRE(params.count() == 17946);
    const fs::path file = tmp.path / "model.ckpt";
    save_checkpoint(cfg, params, file);
    const auto [cfg2, params2] = load_checkpoint(file);
    CHECK(params2.to_flat() == params.to_flat());
    CHECK(to_json(cfg2) == to_json(cfg));

    // a second save writes identical bytes
    const fs::path file2 = tmp.path / "model2.ckpt";
    save_checkpoint(cfg2, params2, file2);
    CHECK(slurp(file) == slurp(file2));
}

TEST_CASE("checkpoint load failure modes are distinct", "[checkpoint]") {
    TempDir tmp;
    const VMDNNConfig cfg = oracles::tiny_config();
    const ParameterSet params = init_parameters(cfg, 5, 1.0);
    const fs::path file = tmp.path / "model.ckpt";
    save_checkpoint(cfg, params, file);
    const std::vector<unsigned char> good = slurp(file);

    SECTION("corrupted magic") {
        auto bad = good;
        bad[0] = 'X';
        spit(file, bad);
        CHECK_THROWS_AS(load_checkpoint(file), CheckpointFormatError);
    }
    SECTION("unsupported version") {
        auto bad = good;
        bad[6] = 99;
        spit(file, bad);
        CHECK_THROWS_AS(load_checkpoint(file), CheckpointVersionError);
    }
    SECTION("truncation") {
        auto bad = good;
        bad.resize(bad.size() / 2);
        spit(file, bad);
        CHECK_THROWS_AS(load_checkpoint(file), CheckpointTruncationError);
    }
    SECTION("flipped parameter byte fails the checksum") {
        auto bad = good;
        bad[bad.size() - 20] ^= 0x40;
        spit(file, bad);
        CHECK_THROWS_AS(load_checkpoint(file), CheckpointChecksumError);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_checkpoint(tmp.path / "nope.ckpt"), CheckpointError);
    }
}

TEST_CASE("crc64 reference values", "[checkpoint]") {
    // CRC-64/XZ (ECMA-182 polynomial, reflected): check value for "123456789"
    const char* s = "123456789";
    CHECK(crc64(s, 9) == 0x995DC9BBDF1939FAULL);
    CHECK(crc64(s, 0) == 0x0ULL);
}

TEST_CASE("flat serialization follows the canonical field order", "[checkpoint]") {
    const VMDNNConfig cfg = oracles::tiny_config();
    ParameterSet p = ParameterSet::zeros(cfg);
    p.k_vf.weights[0] = 1.0;   // first flat entry
    p.b_mo.back() = 2.0;       // last flat entry
    const std::vector<double> flat = p.to_flat();
    CHECK(flat.front() == 1.0);
    CHECK(flat.back() == 2.0);

    ParameterSet q = ParameterSet::zeros(cfg);
    q.from_flat(flat);
    CHECK(q.k_vf.weights[0] == 1.0);
    CHECK(q.b_mo.back() == 2.0);
    CHECK(q.to_flat() == flat);
}
