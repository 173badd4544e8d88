#include "neuroevo/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string_view>

#include <fmt/format.h>
#include <zlib.h>

#include "neuroevo/error.hpp"

namespace neuroevo {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'N', 'E', 'A', 'C'};
constexpr std::size_t kHeaderBytes = 4 + 2 + 1 + 2 + 2;

class Writer {
public:
    template <typename T>
    void put(T v) {
        std::uint8_t raw[sizeof(T)];
        std::memcpy(raw, &v, sizeof(T));
        buf_.insert(buf_.end(), raw, raw + sizeof(T));
    }
    void put_bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void put_string(std::string_view s) {
        if (s.size() > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "string too long for model file");
        put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    Bytes finish() {
        put<std::uint32_t>(crc32(buf_));
        return std::move(buf_);
    }

private:
    Bytes buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> body) : body_(body) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, body_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::span<const std::uint8_t> get_bytes(std::size_t n) {
        need(n);
        auto out = body_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    std::string get_string() {
        const auto n = get<std::uint16_t>();
        auto raw = get_bytes(n);
        return {reinterpret_cast<const char*>(raw.data()), raw.size()};
    }
    std::size_t remaining() const { return body_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > body_.size()) throw Error(ErrorCode::TruncatedFile, "unexpected end of model data");
    }
    std::span<const std::uint8_t> body_;
    std::size_t pos_ = 0;
};

void write_header(Writer& w, Arch arch, std::size_t window, std::size_t horizon, const Mesh& mesh) {
    w.put_bytes({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
    w.put<std::uint16_t>(kFormatVersion);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(arch));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(window));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(horizon));
    w.put_bytes(encode_mesh_bits(mesh));
}

// Validates magic, version and checksum; returns the body without the CRC.
std::span<const std::uint8_t> check_envelope(std::span<const std::uint8_t> bytes, std::size_t min_size) {
    if (bytes.size() < 4) throw Error(ErrorCode::TruncatedFile, fmt::format("{} bytes", bytes.size()));
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error(ErrorCode::BadMagic, "not a NEAC file");
    if (bytes.size() < 6) throw Error(ErrorCode::TruncatedFile, "no version field");
    std::uint16_t version;
    std::memcpy(&version, bytes.data() + 4, 2);
    if (version != kFormatVersion) {
        throw Error(ErrorCode::VersionMismatch, fmt::format("file version {}, reader version {}", version, kFormatVersion));
    }
    if (bytes.size() < min_size) {
        throw Error(ErrorCode::TruncatedFile, fmt::format("{} bytes, need at least {}", bytes.size(), min_size));
    }
    const auto body = bytes.first(bytes.size() - 4);
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + body.size(), 4);
    if (crc32(body) != stored) throw Error(ErrorCode::ChecksumMismatch, "model file CRC does not match");
    return body;
}

MeshFile read_header(Reader& r) {
    r.get_bytes(4);
    r.get<std::uint16_t>();
    const auto arch_id = r.get<std::uint8_t>();
    if (arch_id < 1 || arch_id > 3) throw Error(ErrorCode::ParseError, fmt::format("unknown arch id {}", arch_id));
    MeshFile h;
    h.arch = static_cast<Arch>(arch_id);
    h.window = r.get<std::uint16_t>();
    h.horizon = r.get<std::uint16_t>();
    h.mesh = decode_mesh_bits(r.get_bytes(kMeshBytes));
    if (h.window == 0) throw Error(ErrorCode::DimensionMismatch, "T = 0 in model file");
    return h;
}

std::size_t param_count(Arch arch, std::size_t window) {
    constexpr std::size_t m1_cell = kGates * (2 * kWidth * kWidth + kWidth);
    constexpr std::size_t m2_cell = kGates * (kWidth + 2);
    return m1_layers(arch) * window * m1_cell + window * m2_cell + (has_combiner(arch) ? window : 0);
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> data) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t pos = 0;
    while (pos < data.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(data.size() - pos, 1u << 30));
        crc = ::crc32(crc, data.data() + pos, n);
        pos += n;
    }
    return static_cast<std::uint32_t>(crc);
}

std::array<std::uint8_t, kMeshBytes> encode_mesh_bits(const Mesh& mesh) {
    std::array<std::uint8_t, kMeshBytes> out{};
    std::size_t k = 0;
    auto put = [&](bool b) {
        if (b) out[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
        ++k;
    };
    for (bool b : mesh.input) put(b);
    for (const auto& row : mesh.m1)
        for (bool b : row) put(b);
    for (bool b : mesh.m2) put(b);
    return out;
}

Mesh decode_mesh_bits(std::span<const std::uint8_t> bits) {
    if (bits.size() != kMeshBytes) {
        throw Error(ErrorCode::TruncatedFile, fmt::format("mesh bitmap has {} bytes, expected {}", bits.size(), kMeshBytes));
    }
    Mesh mesh;
    std::size_t k = 0;
    auto get = [&]() {
        const bool b = (bits[k / 8] >> (k % 8)) & 1u;
        ++k;
        return b;
    };
    for (auto& b : mesh.input) b = get();
    for (auto& row : mesh.m1)
        for (auto& b : row) b = get();
    for (auto& b : mesh.m2) b = get();
    return mesh;
}

Bytes serialize_network(const Network& net) {
    Writer w;
    write_header(w, net.arch(), net.window(), net.horizon(), net.mesh());
    w.put<std::uint64_t>(net.seed());
    for_each_param(net.params(), net.mesh(), [&](const double& v, bool) { w.put<double>(v); });
    const InputSpec& spec = net.inputs;
    w.put<std::uint16_t>(static_cast<std::uint16_t>(spec.channel_order.size()));
    for (const auto& name : spec.channel_order) w.put_string(name);
    w.put_string(spec.target);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(spec.ranges.size()));
    for (const auto& [name, range] : spec.ranges) {
        w.put_string(name);
        w.put<double>(range.min);
        w.put<double>(range.max);
    }
    return w.finish();
}

Network deserialize_network(std::span<const std::uint8_t> bytes) {
    const std::size_t header_min = kHeaderBytes + kMeshBytes + 4;
    std::size_t min_size = header_min;
    if (bytes.size() >= kHeaderBytes && std::memcmp(bytes.data(), kMagic, 4) == 0) {
        // The weight block size is fixed by arch and T; check it before the CRC
        // so a truncated file reports as such.
        const std::uint8_t arch_id = bytes[6];
        std::uint16_t window;
        std::memcpy(&window, bytes.data() + 7, 2);
        if (arch_id >= 1 && arch_id <= 3) {
            min_size += 8 + 8 * param_count(static_cast<Arch>(arch_id), window) + 2 + 2 + 2;
        }
    }
    const auto body = check_envelope(bytes, min_size);
    Reader r(body);
    const MeshFile h = read_header(r);
    const std::uint64_t seed = r.get<std::uint64_t>();
    Params params = Params::zeros(h.arch, h.window);
    for_each_param(params, h.mesh, [&](double& v, bool) { v = r.get<double>(); });

    InputSpec spec;
    const auto n_channels = r.get<std::uint16_t>();
    for (std::size_t i = 0; i < n_channels; ++i) spec.channel_order.push_back(r.get_string());
    spec.target = r.get_string();
    const auto n_ranges = r.get<std::uint16_t>();
    for (std::size_t i = 0; i < n_ranges; ++i) {
        std::string name = r.get_string();
        Range range;
        range.min = r.get<double>();
        range.max = r.get<double>();
        spec.ranges.emplace(std::move(name), range);
    }
    if (r.remaining() != 0) throw Error(ErrorCode::ParseError, fmt::format("{} trailing bytes in model file", r.remaining()));

    Network net(h.arch, h.window, h.horizon, h.mesh, std::move(params), seed);
    net.inputs = std::move(spec);
    return net;
}

Bytes serialize_mesh(const MeshFile& file) {
    Writer w;
    write_header(w, file.arch, file.window, file.horizon, file.mesh);
    return w.finish();
}

MeshFile deserialize_mesh(std::span<const std::uint8_t> bytes) {
    const auto body = check_envelope(bytes, kHeaderBytes + kMeshBytes + 4);
    Reader r(body);
    return read_header(r);
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

}  // namespace neuroevo
