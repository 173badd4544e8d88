#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "neuroevo/flightdata.hpp"

namespace neuroevo {

using Vec16 = std::array<double, kWidth>;
using Mat16 = std::array<Vec16, kWidth>;  // [from][to]

// ---- Mesh ------------------------------------------------------------------

/// Binary gate connectivity shared by every gate of every cell. `m1[i][j]`
/// connects node i to hidden node j in a full-width transition (input or
/// previous output); `m2[j]` connects hidden node j to the reduction output.
struct Mesh {
    std::array<bool, kWidth> input{};
    std::array<std::array<bool, kWidth>, kWidth> m1{};
    std::array<bool, kWidth> m2{};

    static Mesh full();
    static Mesh empty() { return Mesh{}; }

    /// Marks an ant path: input i -> hidden j -> output.
    void mark(std::size_t i, std::size_t j) {
        input[i] = true;
        m1[i][j] = true;
        m2[j] = true;
    }

    std::size_t m1_count() const;
    std::size_t m2_count() const;
    std::size_t input_count() const;

    /// Every m1 edge has its input and m2 marks set.
    bool valid() const;

    friend bool operator==(const Mesh&, const Mesh&) = default;
};

/// Reference Architecture I mesh: 139 gate connections, every row populated,
/// every mesh_2 entry set.
Mesh reference_mesh();

/// Row-major text: 16 lines of 16 0/1 digits for m1, then a 17th line of
/// 16 digits for m2. Whitespace between digits is ignored.
Mesh parse_mesh_text(std::string_view text);
std::string format_mesh_text(const Mesh& mesh);

// ---- activations -----------------------------------------------------------

inline double sigmoid(double alpha) {
    return 1.0 / (1.0 + std::exp(-alpha));
}

// ---- cells -----------------------------------------------------------------

enum Gate : std::size_t { kGateG = 0, kGateI = 1, kGateF = 2, kGateO = 3 };
inline constexpr std::size_t kGates = 4;

/// Full-width cell (16 -> 16). Every w and u matrix is masked by mesh.m1.
struct M1Cell {
    std::array<Mat16, kGates> w{};
    std::array<Mat16, kGates> u{};
    std::array<Vec16, kGates> bias{};
};

/// Reduction cell (16 -> 1). w is masked by mesh.m2; the scalar recurrence is
/// never masked.
struct M2Cell {
    std::array<Vec16, kGates> w{};
    std::array<double, kGates> u{};
    std::array<double, kGates> bias{};
};

struct M1State {
    Vec16 a{}, c{};
    Vec16 g{}, i{}, f{}, o{};
};

struct M2State {
    double a = 0.0, c = 0.0;
    double g = 0.0, i = 0.0, f = 0.0, o = 0.0;
};

/// One time step of a full-width cell. Masked weights contribute exactly zero
/// whatever their stored value. Spans must hold 16 values.
M1State cell_forward(const M1Cell& cell, std::span<const double> x, std::span<const double> a_prev,
                     std::span<const double> c_prev, const Mesh& mesh);

/// One time step of a reduction cell; x holds 16 values.
M2State cell_forward(const M2Cell& cell, std::span<const double> x, double a_prev, double c_prev,
                     const Mesh& mesh);

// ---- network ---------------------------------------------------------------

enum class Arch : std::uint8_t { I = 1, II = 2, III = 3 };

std::string to_string(Arch arch);
Arch parse_arch(std::string_view text);
std::size_t default_window(Arch arch);
std::size_t m1_layers(Arch arch);
bool has_combiner(Arch arch);

/// All trainable values of a network, indexed [layer][t] for M1 cells and [t]
/// for M2 cells. Gradients use the same shape.
struct Params {
    std::vector<std::vector<M1Cell>> m1;
    std::vector<M2Cell> m2;
    std::vector<double> combiner;

    static Params zeros(Arch arch, std::size_t window);
};

/// Connection layout of a mesh as index lists, shared by forward and backward.
struct MeshIndex {
    std::vector<std::pair<std::uint8_t, std::uint8_t>> edges;  // (from, to), row-major
    std::vector<std::uint8_t> m2_on;
    bool dense = false;  // every m1 and m2 entry set

    explicit MeshIndex(const Mesh& mesh);
};

struct InputSpec {
    std::vector<std::string> channel_order;
    std::string target = kDefaultTarget;
    NormalizationRanges ranges;  // from training flights only
};

class Network {
public:
    /// Builds a network with weights uniform in [-0.1, 0.1] drawn from `seed`
    /// in layout order, then zeroes every masked entry.
    Network(Arch arch, std::size_t window, std::size_t horizon, const Mesh& mesh, std::uint64_t seed);
    Network(Arch arch, std::size_t window, std::size_t horizon, const Mesh& mesh, Params params,
            std::uint64_t seed);

    Arch arch() const { return arch_; }
    std::size_t window() const { return window_; }
    std::size_t horizon() const { return horizon_; }
    const Mesh& mesh() const { return mesh_; }
    const MeshIndex& index() const { return index_; }
    std::uint64_t seed() const { return seed_; }

    const Params& params() const { return params_; }
    /// Mutable access for trainers. Callers must keep masked entries at zero.
    Params& mutable_params() { return params_; }

    /// Sets every masked weight to exactly 0.
    void apply_mask();

    /// How raw flight data maps onto the input slots; stored in model files.
    InputSpec inputs;

private:
    Arch arch_;
    std::size_t window_;
    std::size_t horizon_;
    Mesh mesh_;
    MeshIndex index_;
    Params params_;
    std::uint64_t seed_;
};

/// Per-sample activations retained for backpropagation.
struct ForwardTrace {
    std::vector<std::vector<M1State>> m1;  // [layer][t]
    std::vector<M2State> m2;               // [t]
    double prediction = 0.0;
};

using Window = std::span<const std::array<double, kWidth>>;

double network_forward(const Network& net, Window x);
double network_forward(const Network& net, Window x, ForwardTrace& trace);

/// Writes d(prediction)/d(param) * d_prediction into `grad` for every unmasked
/// parameter. Masked entries of `grad` are never written.
void network_backward(const Network& net, Window x, const ForwardTrace& trace, double d_prediction,
                      Params& grad);

// ---- accounting ------------------------------------------------------------

/// Unmasked connection weights (w, u and the output combiner); gate biases are
/// not connections and are not counted.
std::size_t count_weights(Arch arch, std::size_t window, const Mesh& mesh);
std::size_t count_weights(Arch arch, const Mesh& mesh);
/// Closed form from mesh counts, usable for meshes known only by their totals.
std::size_t count_weights(Arch arch, std::size_t window, std::size_t m1_count, std::size_t m2_count);

/// Visits every parameter in serialization order with its mask bit:
/// fn(double& value, bool active).
template <typename ParamsT, typename Fn>
void for_each_param(ParamsT& params, const Mesh& mesh, Fn&& fn) {
    for (auto& layer : params.m1) {
        for (auto& cell : layer) {
            for (std::size_t g = 0; g < kGates; ++g) {
                for (std::size_t i = 0; i < kWidth; ++i)
                    for (std::size_t j = 0; j < kWidth; ++j) fn(cell.w[g][i][j], mesh.m1[i][j]);
                for (std::size_t i = 0; i < kWidth; ++i)
                    for (std::size_t j = 0; j < kWidth; ++j) fn(cell.u[g][i][j], mesh.m1[i][j]);
                for (std::size_t j = 0; j < kWidth; ++j) fn(cell.bias[g][j], true);
            }
        }
    }
    for (auto& cell : params.m2) {
        for (std::size_t g = 0; g < kGates; ++g) {
            for (std::size_t i = 0; i < kWidth; ++i) fn(cell.w[g][i], mesh.m2[i]);
            fn(cell.u[g], true);
            fn(cell.bias[g], true);
        }
    }
    for (auto& w : params.combiner) fn(w, true);
}

}  // namespace neuroevo
