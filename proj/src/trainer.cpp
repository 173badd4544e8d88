#include "neuroevo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "neuroevo/error.hpp"

namespace neuroevo {

void TrainConfig::validate() const {
    if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw Error(ErrorCode::InvalidArgument, "learning_rate must be finite and >= 0");
    }
    if (!(clip_norm >= 0.0)) throw Error(ErrorCode::InvalidArgument, "clip_norm must be >= 0");
}

namespace {

void check_lengths(std::span<const double> p, std::span<const double> t) {
    if (p.size() != t.size()) throw Error(ErrorCode::LengthMismatch, fmt::format("{} vs {}", p.size(), t.size()));
    if (p.empty()) throw Error(ErrorCode::Empty, "no samples");
}

// Visits matching unmasked entries of two same-shaped parameter sets.
template <typename A, typename B, typename Fn>
void for_each_active(A& a, B& b, const MeshIndex& idx, Fn&& fn) {
    for (std::size_t l = 0; l < a.m1.size(); ++l) {
        for (std::size_t t = 0; t < a.m1[l].size(); ++t) {
            auto& ca = a.m1[l][t];
            auto& cb = b.m1[l][t];
            for (std::size_t g = 0; g < kGates; ++g) {
                for (auto [i, j] : idx.edges) {
                    fn(ca.w[g][i][j], cb.w[g][i][j]);
                    fn(ca.u[g][i][j], cb.u[g][i][j]);
                }
                for (std::size_t j = 0; j < kWidth; ++j) fn(ca.bias[g][j], cb.bias[g][j]);
            }
        }
    }
    for (std::size_t t = 0; t < a.m2.size(); ++t) {
        auto& ca = a.m2[t];
        auto& cb = b.m2[t];
        for (std::size_t g = 0; g < kGates; ++g) {
            for (std::uint8_t i : idx.m2_on) fn(ca.w[g][i], cb.w[g][i]);
            fn(ca.u[g], cb.u[g]);
            fn(ca.bias[g], cb.bias[g]);
        }
    }
    for (std::size_t t = 0; t < a.combiner.size(); ++t) fn(a.combiner[t], b.combiner[t]);
}

double squared_norm(const Params& grad, const MeshIndex& idx) {
    double sum = 0.0;
    for_each_active(grad, grad, idx, [&](const double& g, const double&) { sum += g * g; });
    return sum;
}

// A quantity at the lower probe point together with its change to the upper
// probe point. Propagating the change through exact identities instead of
// subtracting two forward passes keeps central differences accurate for
// gradients far below the rounding noise of the prediction itself.
struct Diff {
    double v = 0.0;
    double d = 0.0;
};

Diff operator+(Diff a, Diff b) { return {a.v + b.v, a.d + b.d}; }
Diff operator*(Diff a, Diff b) { return {a.v * b.v, a.d * b.v + a.v * b.d + a.d * b.d}; }

// sigmoid(v + d) - sigmoid(v) = (1 - e^-d) * sigmoid(v + d) * sigmoid(-v)
Diff sig(Diff a) { return {sigmoid(a.v), -std::expm1(-a.d) * sigmoid(a.v + a.d) * sigmoid(-a.v)}; }

struct DiffCell {
    std::array<Diff, kWidth> a{}, c{};
};

class Probe {
public:
    Probe(const double* target, double lo, double step) : target_(target), lo_(lo), step_(step) {}
    Diff operator()(const double& w) const { return &w == target_ ? Diff{lo_, step_} : Diff{w, 0.0}; }

private:
    const double* target_;
    double lo_, step_;
};

// Change of the prediction when `target` moves from lo to lo + step; dense
// over all entries, masked ones being zero.
Diff probe_prediction(const Network& net, Window x, const Probe& w) {
    const Params& p = net.params();
    const std::size_t T = net.window();
    std::vector<std::array<Diff, kWidth>> below(T);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < kWidth; ++i) below[t][i] = {x[t][i], 0.0};

    for (const auto& layer : p.m1) {
        DiffCell prev;
        for (std::size_t t = 0; t < T; ++t) {
            const M1Cell& cell = layer[t];
            std::array<std::array<Diff, kWidth>, kGates> z;
            for (std::size_t g = 0; g < kGates; ++g) {
                for (std::size_t j = 0; j < kWidth; ++j) {
                    Diff acc = w(cell.bias[g][j]);
                    for (std::size_t i = 0; i < kWidth; ++i) acc = acc + w(cell.w[g][i][j]) * below[t][i];
                    for (std::size_t k = 0; k < kWidth; ++k) acc = acc + w(cell.u[g][k][j]) * prev.a[k];
                    z[g][j] = acc;
                }
            }
            DiffCell next;
            for (std::size_t j = 0; j < kWidth; ++j) {
                next.c[j] = sig(z[kGateF][j]) * prev.c[j] + sig(z[kGateI][j]) * sig(z[kGateG][j]);
                next.a[j] = sig(z[kGateO][j]) * sig(next.c[j]);
            }
            below[t] = next.a;
            prev = next;
        }
    }

    Diff y{}, a_prev{}, c_prev{};
    for (std::size_t t = 0; t < T; ++t) {
        const M2Cell& cell = p.m2[t];
        std::array<Diff, kGates> z;
        for (std::size_t g = 0; g < kGates; ++g) {
            Diff acc = w(cell.bias[g]);
            for (std::size_t i = 0; i < kWidth; ++i) acc = acc + w(cell.w[g][i]) * below[t][i];
            z[g] = acc + w(cell.u[g]) * a_prev;
        }
        const Diff c = sig(z[kGateF]) * c_prev + sig(z[kGateI]) * sig(z[kGateG]);
        const Diff a = sig(z[kGateO]) * sig(c);
        y = y + (has_combiner(net.arch()) ? w(p.combiner[t]) * a : a);
        a_prev = a;
        c_prev = c;
    }
    if (!has_combiner(net.arch())) {
        const double inv = 1.0 / static_cast<double>(T);
        y = {y.v * inv, y.d * inv};
    }
    return y;
}

[[noreturn]] void non_finite(const WindowedDataset& data, std::size_t epoch, std::size_t s, const char* what) {
    const Sample& sample = data.samples[s];
    throw Error(ErrorCode::NonFiniteGradient,
                fmt::format("{} at epoch {}, sample {} (flight {}, start {}s)", what, epoch, s,
                            sample.flight < data.flight_ids.size() ? data.flight_ids[sample.flight] : "?",
                            sample.start));
}

}  // namespace

double mse_cost(std::span<const double> predictions, std::span<const double> targets) {
    check_lengths(predictions, targets);
    double sum = 0.0;
    for (std::size_t k = 0; k < predictions.size(); ++k) {
        const double r = targets[k] - predictions[k];
        sum += r * r;
    }
    return 0.5 * sum / static_cast<double>(predictions.size());
}

double mae_cost(std::span<const double> predictions, std::span<const double> targets) {
    check_lengths(predictions, targets);
    double sum = 0.0;
    for (std::size_t k = 0; k < predictions.size(); ++k) sum += std::abs(targets[k] - predictions[k]);
    return sum / static_cast<double>(predictions.size());
}

Params sample_gradient(const Network& net, const Sample& sample) {
    ForwardTrace trace;
    const double y_hat = network_forward(net, sample.x, trace);
    Params grad = Params::zeros(net.arch(), net.window());
    network_backward(net, sample.x, trace, y_hat - sample.y, grad);
    return grad;
}

double backprop_epoch(Network& net, const WindowedDataset& data, const TrainConfig& cfg, std::size_t epoch) {
    if (data.empty()) throw Error(ErrorCode::Empty, "training set has no samples");
    if (data.window != net.window()) {
        throw Error(ErrorCode::DimensionMismatch,
                    fmt::format("dataset T={} but network T={}", data.window, net.window()));
    }
    const MeshIndex& idx = net.index();
    const double lr = cfg.learning_rate;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) {
        std::mt19937_64 rng(cfg.seed ^ (0x9E3779B97F4A7C15ull * (epoch + 1)));
        std::shuffle(order.begin(), order.end(), rng);
    }

    ForwardTrace trace;
    // Every unmasked entry is overwritten by each backward pass, masked ones
    // stay zero, so the buffer is allocated once per epoch.
    Params grad = Params::zeros(net.arch(), net.window());
    double cost_sum = 0.0;

    auto clip_scale = [&](const Params& g, std::size_t s) {
        const double norm2 = squared_norm(g, idx);
        if (!std::isfinite(norm2)) non_finite(data, epoch, s, "non-finite gradient");
        if (cfg.clip_norm > 0.0 && norm2 > cfg.clip_norm * cfg.clip_norm) return cfg.clip_norm / std::sqrt(norm2);
        return 1.0;
    };

    if (cfg.batch == BatchMode::PerSample) {
        for (std::size_t s : order) {
            const Sample& sample = data.samples[s];
            const double y_hat = network_forward(net, sample.x, trace);
            if (!std::isfinite(y_hat)) non_finite(data, epoch, s, "non-finite prediction");
            const double r = y_hat - sample.y;
            cost_sum += 0.5 * r * r;
            network_backward(net, sample.x, trace, r, grad);
            const double step = lr * clip_scale(grad, s);
            for_each_active(net.mutable_params(), grad, idx, [step](double& w, const double& g) { w -= step * g; });
        }
    } else {
        Params sum = Params::zeros(net.arch(), net.window());
        for (std::size_t s : order) {
            const Sample& sample = data.samples[s];
            const double y_hat = network_forward(net, sample.x, trace);
            if (!std::isfinite(y_hat)) non_finite(data, epoch, s, "non-finite prediction");
            const double r = y_hat - sample.y;
            cost_sum += 0.5 * r * r;
            network_backward(net, sample.x, trace, r, grad);
            for_each_active(sum, grad, idx, [](double& acc, const double& g) { acc += g; });
        }
        const double inv_n = 1.0 / static_cast<double>(data.size());
        for_each_active(sum, sum, idx, [inv_n](double& acc, const double&) { acc *= inv_n; });
        const double step = lr * clip_scale(sum, order.back());
        for_each_active(net.mutable_params(), sum, idx, [step](double& w, const double& g) { w -= step * g; });
    }
    return cost_sum / static_cast<double>(data.size());
}

TrainReport train(Network& net, const WindowedDataset& train_data, const WindowedDataset* test_data,
                  const TrainConfig& cfg) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    TrainReport report;
    report.cost_history.reserve(cfg.epochs);
    for (std::size_t e = 0; e < cfg.epochs; ++e) report.cost_history.push_back(backprop_epoch(net, train_data, cfg, e));
    report.final_train_mse = evaluate(net, train_data).mse;
    if (test_data != nullptr) {
        const EvalResult r = evaluate(net, *test_data);
        report.test_mse = r.mse;
        report.test_mae = r.mae;
    }
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

double gradient_check(const Network& net, const Sample& sample, double eps, std::size_t max_params,
                      std::uint64_t subset_seed) {
    if (!(eps >= 1e-8 && eps <= 1e-3)) throw Error(ErrorCode::InvalidArgument, "eps must lie in [1e-8, 1e-3]");
    const Params analytic = sample_gradient(net, sample);

    Network probe = net;
    std::vector<double*> slots;
    std::vector<const double*> grads;
    for_each_active(probe.mutable_params(), analytic, probe.index(), [&](double& w, const double& g) {
        slots.push_back(&w);
        grads.push_back(&g);
    });
    std::vector<std::size_t> pick(slots.size());
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    if (pick.size() > max_params) {
        std::mt19937_64 rng(subset_seed);
        std::shuffle(pick.begin(), pick.end(), rng);
        pick.resize(max_params);
    }

    double worst = 0.0;
    for (std::size_t k : pick) {
        const double lo = *slots[k] - eps;
        const double step = (*slots[k] + eps) - lo;
        const Diff y = probe_prediction(probe, sample.x, Probe(slots[k], lo, step));
        // cost(hi) - cost(lo) = dr * (r_lo + dr / 2) with r = y - target
        const double numeric = y.d * ((y.v - sample.y) + 0.5 * y.d) / step;
        const double exact = *grads[k];
        const double rel = std::abs(exact - numeric) / std::max(1e-12, std::abs(exact) + std::abs(numeric));
        worst = std::max(worst, rel);
    }
    return worst;
}

std::vector<double> predict(const Network& net, const WindowedDataset& data) {
    if (data.window != net.window()) {
        throw Error(ErrorCode::DimensionMismatch,
                    fmt::format("dataset T={} but network T={}", data.window, net.window()));
    }
    std::vector<double> out;
    out.reserve(data.size());
    ForwardTrace trace;
    for (const auto& s : data.samples) out.push_back(network_forward(net, s.x, trace));
    return out;
}

EvalResult evaluate(const Network& net, const WindowedDataset& data) {
    if (data.empty()) throw Error(ErrorCode::Empty, "evaluation set has no samples");
    const auto predictions = predict(net, data);
    std::vector<double> targets;
    targets.reserve(data.size());
    for (const auto& s : data.samples) targets.push_back(s.y);
    return {mse_cost(predictions, targets), mae_cost(predictions, targets)};
}

void write_train_report(const TrainReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << "epoch,cost\n";
    for (std::size_t e = 0; e < report.cost_history.size(); ++e) {
        out << e + 1 << ',' << fmt::format("{:.17g}", report.cost_history[e]) << '\n';
    }
    out << fmt::format("# final_train_mse={:.17g},test_mse={:.17g},test_mae={:.17g},wall_time_s={:.6f}\n",
                       report.final_train_mse, report.test_mse, report.test_mae, report.wall_time_s);
}

TrainReport read_train_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("epoch,cost", 0) != 0) {
        throw Error(ErrorCode::ParseError, path.string() + " is not a training report");
    }
    TrainReport report;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::string body = line.substr(1);
            std::stringstream ss(body);
            std::string kv;
            while (std::getline(ss, kv, ',')) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) continue;
                std::string key = kv.substr(0, eq);
                key.erase(0, key.find_first_not_of(' '));
                const double v = std::stod(kv.substr(eq + 1));
                if (key == "final_train_mse") report.final_train_mse = v;
                else if (key == "test_mse") report.test_mse = v;
                else if (key == "test_mae") report.test_mae = v;
                else if (key == "wall_time_s") report.wall_time_s = v;
            }
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw Error(ErrorCode::ParseError, "bad report row: " + line);
        report.cost_history.push_back(std::stod(line.substr(comma + 1)));
    }
    return report;
}

}  // namespace neuroevo
