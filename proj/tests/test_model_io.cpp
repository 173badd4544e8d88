#include <doctest.h>

#include <cstring>
#include <random>

#include "neuroevo/error.hpp"
#include "neuroevo/model_io.hpp"
#include "test_util.hpp"

using namespace neuroevo;
using testutil::error_code_of;

namespace {

Mesh random_mesh(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution on(0.35);
    Mesh m;
    for (std::size_t i = 0; i < kWidth; ++i)
        for (std::size_t j = 0; j < kWidth; ++j)
            if (on(rng)) m.mark(i, j);
    return m;
}

std::vector<double> flat(const Network& net) {
    std::vector<double> v;
    for_each_param(net.params(), net.mesh(), [&](const double& x, bool) { v.push_back(x); });
    return v;
}

// Bitwise CRC-32 (reflected polynomial 0xEDB88320).
std::uint32_t crc_oracle(const std::uint8_t* p, std::size_t n) {
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t k = 0; k < n; ++k) {
        c ^= p[k];
        for (int b = 0; b < 8; ++b) c = (c >> 1) ^ (0xEDB88320u & (0u - (c & 1u)));
    }
    return ~c;
}

}  // namespace

TEST_CASE("crc32 matches the check value and a bitwise oracle") {
    const std::string check = "123456789";
    const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(check.data()), check.size());
    CHECK(crc32(bytes) == 0xCBF43926u);
    std::mt19937_64 rng(1);
    Bytes data(1000);
    for (auto& b : data) b = static_cast<std::uint8_t>(rng());
    CHECK(crc32(data) == crc_oracle(data.data(), data.size()));
}

TEST_CASE("mesh bit packing") {
    CHECK(kMeshBytes == 36);
    const Mesh m = random_mesh(2);
    const auto bits = encode_mesh_bits(m);
    CHECK(decode_mesh_bits(bits) == m);
    Mesh one;
    one.input[9] = true;
    CHECK(encode_mesh_bits(one)[1] == 0x02);
}

TEST_CASE("network round trip is bitwise") {
    for (Arch arch : {Arch::I, Arch::II, Arch::III}) {
        const Mesh mesh = random_mesh(static_cast<std::uint64_t>(arch));
        Network net(arch, default_window(arch), 5, mesh, 42);
        net.inputs.channel_order = {"ALT", "N1", "Vib"};
        net.inputs.ranges = {{"ALT", {0.0, 4e4}}, {"N1", {1.5, 99.25}}, {"Vib", {0.0, 3.0}}};
        const Bytes bytes = serialize_network(net);
        const Network back = deserialize_network(bytes);
        CHECK(back.arch() == arch);
        CHECK(back.window() == net.window());
        CHECK(back.horizon() == 5);
        CHECK(back.seed() == 42);
        CHECK(back.mesh() == mesh);
        const auto a = flat(net), b = flat(back);
        REQUIRE(a.size() == b.size());
        CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
        CHECK(count_weights(arch, back.window(), back.mesh()) == count_weights(arch, net.window(), mesh));
        CHECK(back.inputs.channel_order == net.inputs.channel_order);
        CHECK(back.inputs.target == "Vib");
        CHECK(back.inputs.ranges.at("N1").max == 99.25);
    }
}

TEST_CASE("model file layout and corruption") {
    Network net(Arch::I, 10, 1, Mesh::full(), 7);
    Bytes bytes = serialize_network(net);
    CHECK(std::memcmp(bytes.data(), "NEAC", 4) == 0);
    CHECK(bytes[4] == kFormatVersion);
    CHECK(bytes[6] == 1);

    Bytes flipped = bytes;
    flipped[200] ^= 0x10;
    CHECK(error_code_of([&] { deserialize_network(flipped); }) == ErrorCode::ChecksumMismatch);

    Bytes magic = bytes;
    magic[0] = 'X';
    CHECK(error_code_of([&] { deserialize_network(magic); }) == ErrorCode::BadMagic);

    Bytes version = bytes;
    version[4] = 9;
    CHECK(error_code_of([&] { deserialize_network(version); }) == ErrorCode::VersionMismatch);

    const Bytes truncated(bytes.begin(), bytes.begin() + 20);
    CHECK(error_code_of([&] { deserialize_network(truncated); }) == ErrorCode::TruncatedFile);
    CHECK(error_code_of([] { deserialize_network(Bytes{}); }) == ErrorCode::TruncatedFile);
}

TEST_CASE("mesh files and model files share a header") {
    const Mesh mesh = reference_mesh();
    const MeshFile file{Arch::III, 20, 10, mesh};
    const Bytes bytes = serialize_mesh(file);
    CHECK(bytes.size() == 4 + 2 + 1 + 2 + 2 + kMeshBytes + 4);
    const MeshFile back = deserialize_mesh(bytes);
    CHECK(back.arch == Arch::III);
    CHECK(back.window == 20);
    CHECK(back.horizon == 10);
    CHECK(back.mesh == mesh);

    Network net(Arch::I, 10, 1, mesh, 3);
    const MeshFile from_model = deserialize_mesh(serialize_network(net));
    CHECK(from_model.mesh == mesh);
    CHECK(from_model.arch == Arch::I);
}

TEST_CASE("save and load through the filesystem") {
    testutil::TempDir dir("model");
    Network net(Arch::II, 10, 20, reference_mesh(), 9);
    save_network(net, dir / "m.neac");
    const Network back = load_network(dir / "m.neac");
    CHECK(flat(back) == flat(net));
    CHECK(error_code_of([&] { load_network(dir / "missing.neac"); }) == ErrorCode::Io);
}
