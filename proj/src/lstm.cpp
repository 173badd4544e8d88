#include "neuroevo/lstm.hpp"

#include <random>

#include <fmt/format.h>

#include "neuroevo/error.hpp"

namespace neuroevo {

// ---- Mesh ------------------------------------------------------------------

Mesh Mesh::full() {
    Mesh m;
    m.input.fill(true);
    for (auto& row : m.m1) row.fill(true);
    m.m2.fill(true);
    return m;
}

std::size_t Mesh::m1_count() const {
    std::size_t n = 0;
    for (const auto& row : m1)
        for (bool b : row) n += b;
    return n;
}

std::size_t Mesh::m2_count() const {
    std::size_t n = 0;
    for (bool b : m2) n += b;
    return n;
}

std::size_t Mesh::input_count() const {
    std::size_t n = 0;
    for (bool b : input) n += b;
    return n;
}

bool Mesh::valid() const {
    for (std::size_t i = 0; i < kWidth; ++i)
        for (std::size_t j = 0; j < kWidth; ++j)
            if (m1[i][j] && !(input[i] && m2[j])) return false;
    return true;
}

Mesh reference_mesh() {
    static constexpr const char* kRows[kWidth] = {
        "0101101001111010", "0001011001101101", "0000011011000110", "0101001001000011",
        "1001101101101001", "0110101111100011", "1100110000011111", "0111110110010110",
        "0111100101010111", "1011100010100101", "0101110111010011", "1001101000101100",
        "1111011010010101", "0111110111011100", "1000111111001110", "0001100100001101",
    };
    std::string text;
    for (const char* row : kRows) text += std::string(row) + "\n";
    text += "1111111111111111\n";
    return parse_mesh_text(text);
}

Mesh parse_mesh_text(std::string_view text) {
    std::vector<bool> bits;
    for (char ch : text) {
        if (ch == '0' || ch == '1') {
            bits.push_back(ch == '1');
        } else if (ch != ' ' && ch != '\t' && ch != '\n' && ch != '\r' && ch != ',') {
            throw Error(ErrorCode::ParseError, fmt::format("unexpected character '{}' in mesh text", ch));
        }
    }
    if (bits.size() != kWidth * kWidth + kWidth) {
        throw Error(ErrorCode::DimensionMismatch,
                    fmt::format("mesh text holds {} digits, expected {}", bits.size(), kWidth * kWidth + kWidth));
    }
    Mesh mesh;
    for (std::size_t i = 0; i < kWidth; ++i) {
        for (std::size_t j = 0; j < kWidth; ++j) {
            mesh.m1[i][j] = bits[i * kWidth + j];
            if (mesh.m1[i][j]) mesh.input[i] = true;
        }
    }
    for (std::size_t j = 0; j < kWidth; ++j) mesh.m2[j] = bits[kWidth * kWidth + j];
    return mesh;
}

std::string format_mesh_text(const Mesh& mesh) {
    std::string out;
    for (const auto& row : mesh.m1) {
        for (bool b : row) out += b ? '1' : '0';
        out += '\n';
    }
    for (bool b : mesh.m2) out += b ? '1' : '0';
    out += '\n';
    return out;
}

// ---- cells -----------------------------------------------------------------

MeshIndex::MeshIndex(const Mesh& mesh) {
    for (std::size_t i = 0; i < kWidth; ++i)
        for (std::size_t j = 0; j < kWidth; ++j)
            if (mesh.m1[i][j]) edges.emplace_back(static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(j));
    for (std::size_t j = 0; j < kWidth; ++j)
        if (mesh.m2[j]) m2_on.push_back(static_cast<std::uint8_t>(j));
    dense = edges.size() == kWidth * kWidth && m2_on.size() == kWidth;
}

namespace {

// Accumulation order for every pre-activation is bias, then w terms by
// ascending source index, then u terms by ascending source index. The sparse
// and dense paths follow the same order, so skipping a masked term gives the
// same bits as adding a zero-weight term.
void m1_step(const M1Cell& cell, const MeshIndex& idx, const double* x, const double* a_prev,
             const double* c_prev, M1State& s) {
    std::array<Vec16, kGates> z = cell.bias;
    if (idx.dense) {
        for (std::size_t g = 0; g < kGates; ++g) {
            for (std::size_t i = 0; i < kWidth; ++i) {
                const double xi = x[i];
                for (std::size_t j = 0; j < kWidth; ++j) z[g][j] += cell.w[g][i][j] * xi;
            }
            for (std::size_t k = 0; k < kWidth; ++k) {
                const double ak = a_prev[k];
                for (std::size_t j = 0; j < kWidth; ++j) z[g][j] += cell.u[g][k][j] * ak;
            }
        }
    } else {
        for (auto [i, j] : idx.edges) {
            const double xi = x[i];
            for (std::size_t g = 0; g < kGates; ++g) z[g][j] += cell.w[g][i][j] * xi;
        }
        for (auto [k, j] : idx.edges) {
            const double ak = a_prev[k];
            for (std::size_t g = 0; g < kGates; ++g) z[g][j] += cell.u[g][k][j] * ak;
        }
    }
    for (std::size_t j = 0; j < kWidth; ++j) {
        s.g[j] = sigmoid(z[kGateG][j]);
        s.i[j] = sigmoid(z[kGateI][j]);
        s.f[j] = sigmoid(z[kGateF][j]);
        s.o[j] = sigmoid(z[kGateO][j]);
        s.c[j] = s.f[j] * c_prev[j] + s.i[j] * s.g[j];
        s.a[j] = s.o[j] * sigmoid(s.c[j]);
    }
}

void m2_step(const M2Cell& cell, const MeshIndex& idx, const double* x, double a_prev, double c_prev,
             M2State& s) {
    std::array<double, kGates> z = cell.bias;
    for (std::size_t g = 0; g < kGates; ++g) {
        for (std::uint8_t i : idx.m2_on) z[g] += cell.w[g][i] * x[i];
        z[g] += cell.u[g] * a_prev;
    }
    s.g = sigmoid(z[kGateG]);
    s.i = sigmoid(z[kGateI]);
    s.f = sigmoid(z[kGateF]);
    s.o = sigmoid(z[kGateO]);
    s.c = s.f * c_prev + s.i * s.g;
    s.a = s.o * sigmoid(s.c);
}

void require_width(std::span<const double> v, const char* what) {
    if (v.size() != kWidth) {
        throw Error(ErrorCode::DimensionMismatch, fmt::format("{} has {} entries, expected {}", what, v.size(), kWidth));
    }
}

}  // namespace

M1State cell_forward(const M1Cell& cell, std::span<const double> x, std::span<const double> a_prev,
                     std::span<const double> c_prev, const Mesh& mesh) {
    require_width(x, "x_t");
    require_width(a_prev, "a_prev");
    require_width(c_prev, "c_prev");
    const MeshIndex idx(mesh);
    M1State s;
    m1_step(cell, idx, x.data(), a_prev.data(), c_prev.data(), s);
    return s;
}

M2State cell_forward(const M2Cell& cell, std::span<const double> x, double a_prev, double c_prev,
                     const Mesh& mesh) {
    require_width(x, "x_t");
    const MeshIndex idx(mesh);
    M2State s;
    m2_step(cell, idx, x.data(), a_prev, c_prev, s);
    return s;
}

// ---- architecture ----------------------------------------------------------

std::string to_string(Arch arch) {
    switch (arch) {
        case Arch::I: return "I";
        case Arch::II: return "II";
        case Arch::III: return "III";
    }
    return "?";
}

Arch parse_arch(std::string_view text) {
    if (text == "I" || text == "1") return Arch::I;
    if (text == "II" || text == "2") return Arch::II;
    if (text == "III" || text == "3") return Arch::III;
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown architecture '{}'", text));
}

std::size_t default_window(Arch arch) { return arch == Arch::III ? 20 : 10; }
std::size_t m1_layers(Arch arch) { return arch == Arch::III ? 2 : 1; }
bool has_combiner(Arch arch) { return arch != Arch::II; }

Params Params::zeros(Arch arch, std::size_t window) {
    Params p;
    p.m1.assign(m1_layers(arch), std::vector<M1Cell>(window));
    p.m2.assign(window, M2Cell{});
    if (has_combiner(arch)) p.combiner.assign(window, 0.0);
    return p;
}

Network::Network(Arch arch, std::size_t window, std::size_t horizon, const Mesh& mesh, std::uint64_t seed)
    : Network(arch, window, horizon, mesh, Params::zeros(arch, window), seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.1, 0.1);
    for_each_param(params_, mesh_, [&](double& w, bool) { w = dist(rng); });
    apply_mask();
}

Network::Network(Arch arch, std::size_t window, std::size_t horizon, const Mesh& mesh, Params params,
                 std::uint64_t seed)
    : arch_(arch), window_(window), horizon_(horizon), mesh_(mesh), index_(mesh), params_(std::move(params)),
      seed_(seed) {
    if (window == 0) throw Error(ErrorCode::DimensionMismatch, "window must be >= 1");
    const bool shape_ok = params_.m1.size() == m1_layers(arch) && params_.m2.size() == window &&
                          params_.combiner.size() == (has_combiner(arch) ? window : 0);
    bool layers_ok = shape_ok;
    for (const auto& layer : params_.m1) layers_ok = layers_ok && layer.size() == window;
    if (!layers_ok) {
        throw Error(ErrorCode::DimensionMismatch,
                    fmt::format("parameter shape does not match architecture {} with T={}", to_string(arch), window));
    }
}

void Network::apply_mask() {
    for_each_param(params_, mesh_, [](double& w, bool active) {
        if (!active) w = 0.0;
    });
}

// ---- forward / backward ----------------------------------------------------

double network_forward(const Network& net, Window x) {
    ForwardTrace trace;
    return network_forward(net, x, trace);
}

double network_forward(const Network& net, Window x, ForwardTrace& trace) {
    const std::size_t T = net.window();
    if (x.size() != T) {
        throw Error(ErrorCode::DimensionMismatch, fmt::format("window has {} rows, network expects {}", x.size(), T));
    }
    const Params& p = net.params();
    const MeshIndex& idx = net.index();
    const std::size_t layers = p.m1.size();

    trace.m1.resize(layers);
    static const Vec16 kZero{};
    for (std::size_t l = 0; l < layers; ++l) {
        auto& states = trace.m1[l];
        states.resize(T);
        for (std::size_t t = 0; t < T; ++t) {
            const double* in = l == 0 ? x[t].data() : trace.m1[l - 1][t].a.data();
            const double* a_prev = t == 0 ? kZero.data() : states[t - 1].a.data();
            const double* c_prev = t == 0 ? kZero.data() : states[t - 1].c.data();
            m1_step(p.m1[l][t], idx, in, a_prev, c_prev, states[t]);
        }
    }
    trace.m2.resize(T);
    const auto& top = trace.m1[layers - 1];
    for (std::size_t t = 0; t < T; ++t) {
        const double a_prev = t == 0 ? 0.0 : trace.m2[t - 1].a;
        const double c_prev = t == 0 ? 0.0 : trace.m2[t - 1].c;
        m2_step(p.m2[t], idx, top[t].a.data(), a_prev, c_prev, trace.m2[t]);
    }

    double y = 0.0;
    if (has_combiner(net.arch())) {
        for (std::size_t t = 0; t < T; ++t) y += p.combiner[t] * trace.m2[t].a;
    } else {
        for (std::size_t t = 0; t < T; ++t) y += trace.m2[t].a;
        y /= static_cast<double>(T);
    }
    trace.prediction = y;
    return y;
}

void network_backward(const Network& net, Window x, const ForwardTrace& trace, double d_prediction,
                      Params& grad) {
    const std::size_t T = net.window();
    const Params& p = net.params();
    const MeshIndex& idx = net.index();
    const std::size_t layers = p.m1.size();

    // d(loss)/d(a) arriving from above at each time step of the current layer.
    std::vector<Vec16> d_above(T, Vec16{});

    // Output combiner.
    std::vector<double> d_a2(T);
    if (has_combiner(net.arch())) {
        for (std::size_t t = 0; t < T; ++t) {
            grad.combiner[t] = trace.m2[t].a * d_prediction;
            d_a2[t] = p.combiner[t] * d_prediction;
        }
    } else {
        for (std::size_t t = 0; t < T; ++t) d_a2[t] = d_prediction / static_cast<double>(T);
    }

    // Reduction layer.
    {
        const auto& top = trace.m1[layers - 1];
        double da_rec = 0.0, dc_rec = 0.0;
        for (std::size_t t = T; t-- > 0;) {
            const M2State& s = trace.m2[t];
            const double c_prev = t == 0 ? 0.0 : trace.m2[t - 1].c;
            const double a_prev = t == 0 ? 0.0 : trace.m2[t - 1].a;
            const double sc = sigmoid(s.c);
            const double da = d_a2[t] + da_rec;
            const double dc = da * s.o * sc * (1.0 - sc) + dc_rec;
            std::array<double, kGates> dz;
            dz[kGateO] = da * sc * s.o * (1.0 - s.o);
            dz[kGateI] = dc * s.g * s.i * (1.0 - s.i);
            dz[kGateG] = dc * s.i * s.g * (1.0 - s.g);
            dz[kGateF] = dc * c_prev * s.f * (1.0 - s.f);

            const M2Cell& cell = p.m2[t];
            M2Cell& gc = grad.m2[t];
            const double* in = top[t].a.data();
            Vec16& dx = d_above[t];
            dx.fill(0.0);
            da_rec = 0.0;
            for (std::size_t g = 0; g < kGates; ++g) {
                for (std::uint8_t i : idx.m2_on) {
                    gc.w[g][i] = in[i] * dz[g];
                    dx[i] += cell.w[g][i] * dz[g];
                }
                gc.u[g] = a_prev * dz[g];
                gc.bias[g] = dz[g];
                da_rec += cell.u[g] * dz[g];
            }
            dc_rec = dc * s.f;
        }
    }

    // Full-width layers, top to bottom.
    static const Vec16 kZero{};
    for (std::size_t l = layers; l-- > 0;) {
        const auto& states = trace.m1[l];
        Vec16 da_rec{}, dc_rec{};
        std::vector<Vec16> d_below(l > 0 ? T : 0, Vec16{});
        for (std::size_t t = T; t-- > 0;) {
            const M1State& s = states[t];
            const Vec16& c_prev = t == 0 ? kZero : states[t - 1].c;
            const Vec16& a_prev = t == 0 ? kZero : states[t - 1].a;
            const double* in = l == 0 ? x[t].data() : trace.m1[l - 1][t].a.data();

            std::array<Vec16, kGates> dz;
            for (std::size_t j = 0; j < kWidth; ++j) {
                const double sc = sigmoid(s.c[j]);
                const double da = d_above[t][j] + da_rec[j];
                const double dc = da * s.o[j] * sc * (1.0 - sc) + dc_rec[j];
                dz[kGateO][j] = da * sc * s.o[j] * (1.0 - s.o[j]);
                dz[kGateI][j] = dc * s.g[j] * s.i[j] * (1.0 - s.i[j]);
                dz[kGateG][j] = dc * s.i[j] * s.g[j] * (1.0 - s.g[j]);
                dz[kGateF][j] = dc * c_prev[j] * s.f[j] * (1.0 - s.f[j]);
                dc_rec[j] = dc * s.f[j];
            }

            const M1Cell& cell = p.m1[l][t];
            M1Cell& gc = grad.m1[l][t];
            gc.bias = dz;
            da_rec.fill(0.0);
            if (idx.dense) {
                for (std::size_t g = 0; g < kGates; ++g) {
                    for (std::size_t i = 0; i < kWidth; ++i) {
                        const double xi = in[i];
                        const double ai = a_prev[i];
                        double dxi = 0.0, dai = 0.0;
                        for (std::size_t j = 0; j < kWidth; ++j) {
                            gc.w[g][i][j] = xi * dz[g][j];
                            gc.u[g][i][j] = ai * dz[g][j];
                            dxi += cell.w[g][i][j] * dz[g][j];
                            dai += cell.u[g][i][j] * dz[g][j];
                        }
                        if (l > 0) d_below[t][i] += dxi;
                        da_rec[i] += dai;
                    }
                }
            } else {
                for (auto [i, j] : idx.edges) {
                    const double xi = in[i];
                    const double ai = a_prev[i];
                    double dxi = 0.0, dai = 0.0;
                    for (std::size_t g = 0; g < kGates; ++g) {
                        gc.w[g][i][j] = xi * dz[g][j];
                        gc.u[g][i][j] = ai * dz[g][j];
                        dxi += cell.w[g][i][j] * dz[g][j];
                        dai += cell.u[g][i][j] * dz[g][j];
                    }
                    if (l > 0) d_below[t][i] += dxi;
                    da_rec[i] += dai;
                }
            }
        }
        if (l > 0) d_above = std::move(d_below);
    }
}

// ---- accounting ------------------------------------------------------------

std::size_t count_weights(Arch arch, std::size_t window, std::size_t m1_count, std::size_t m2_count) {
    const std::size_t per_m1_cell = 2 * kGates * m1_count;      // w and u of four gates
    const std::size_t per_m2_cell = kGates * m2_count + kGates;  // masked w, scalar u
    const std::size_t combiner = has_combiner(arch) ? window : 0;
    return m1_layers(arch) * window * per_m1_cell + window * per_m2_cell + combiner;
}

std::size_t count_weights(Arch arch, std::size_t window, const Mesh& mesh) {
    return count_weights(arch, window, mesh.m1_count(), mesh.m2_count());
}

std::size_t count_weights(Arch arch, const Mesh& mesh) {
    return count_weights(arch, default_window(arch), mesh);
}

}  // namespace neuroevo
