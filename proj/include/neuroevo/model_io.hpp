#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "neuroevo/lstm.hpp"

namespace neuroevo {

// Binary model format, little-endian:
//
//   "NEAC"            4 bytes magic
//   version           u16 (kFormatVersion)
//   arch id           u8  (1, 2, 3)
//   T                 u16
//   H                 u16
//   mesh bitmaps      36 bytes: input[16], m1[16][16] row-major, m2[16];
//                     bit k lives in byte k/8 at position k%8 (LSB first)
//   --- model files only ---
//   init seed         u64
//   parameters        f64 each, in for_each_param order: per M1 layer, per
//                     time step, per gate (g, i, f, o): w 16x16, u 16x16,
//                     bias 16; then per time step, per gate: w 16, u, bias;
//                     then the T combiner weights (Arch I and III)
//   input spec        u16 n, n x str channel name; str target;
//                     u16 m, m x (str name, f64 min, f64 max)
//                     where str = u16 length + UTF-8 bytes
//   ---
//   CRC-32            u32 over every preceding byte
//
// A mesh-only file is the header and bitmaps followed by the CRC.

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kMeshBytes = (kWidth + kWidth * kWidth + kWidth) / 8;

using Bytes = std::vector<std::uint8_t>;

std::uint32_t crc32(std::span<const std::uint8_t> data);

std::array<std::uint8_t, kMeshBytes> encode_mesh_bits(const Mesh& mesh);
Mesh decode_mesh_bits(std::span<const std::uint8_t> bits);

Bytes serialize_network(const Network& net);
Network deserialize_network(std::span<const std::uint8_t> bytes);

struct MeshFile {
    Arch arch = Arch::I;
    std::size_t window = 10;
    std::size_t horizon = 1;
    Mesh mesh;
};

Bytes serialize_mesh(const MeshFile& file);
/// Accepts mesh-only files and model files (the weights are skipped).
MeshFile deserialize_mesh(std::span<const std::uint8_t> bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

inline void save_network(const Network& net, const std::filesystem::path& path) {
    write_file(path, serialize_network(net));
}
inline Network load_network(const std::filesystem::path& path) { return deserialize_network(read_file(path)); }

}  // namespace neuroevo
