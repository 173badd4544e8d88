#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "neuroevo/error.hpp"
#include "neuroevo/trainer.hpp"
#include "test_util.hpp"

using namespace neuroevo;
using testutil::error_code_of;

namespace {

WindowedDataset synthetic_windows(std::uint64_t seed, std::size_t n_flights, std::size_t length, std::size_t T,
                                  std::size_t H = 1) {
    const auto corpus = synth_flights(seed, n_flights, length, 8);
    const auto normalized = normalize_all(corpus.flights, compute_ranges(corpus.flights));
    return make_windows(normalized, T, H, normalized.front().names());
}

Mesh random_mesh(std::mt19937_64& rng, double density) {
    std::bernoulli_distribution on(density);
    Mesh m;
    for (std::size_t i = 0; i < kWidth; ++i)
        for (std::size_t j = 0; j < kWidth; ++j)
            if (on(rng)) m.mark(i, j);
    return m;
}

std::vector<double> flat(const Params& p, const Mesh& mesh) {
    std::vector<double> v;
    for_each_param(p, mesh, [&](const double& x, bool) { v.push_back(x); });
    return v;
}

// Naive central difference of the single-sample cost in plain doubles.
double naive_slope(const Network& net, double& slot_value, const Sample& s, double eps) {
    const double keep = slot_value;
    slot_value = keep + eps;
    const double up = 0.5 * std::pow(s.y - network_forward(net, s.x), 2);
    slot_value = keep - eps;
    const double down = 0.5 * std::pow(s.y - network_forward(net, s.x), 2);
    slot_value = keep;
    return (up - down) / (2.0 * eps);
}

}  // namespace

TEST_CASE("mse and mae") {
    const std::vector<double> y{1, 0}, zero{0, 0};
    CHECK(mse_cost(zero, y) == 0.25);
    CHECK(mae_cost(zero, y) == 0.5);
    CHECK(mse_cost(y, y) == 0.0);
    CHECK(mae_cost(y, y) == 0.0);

    const std::vector<double> p{0.3, -1.2, 2.0}, t{0.1, 0.4, 1.1};
    std::vector<double> p2(3), ps(3), ts(3);
    for (int k = 0; k < 3; ++k) {
        p2[k] = t[k] + 2.0 * (p[k] - t[k]);
        ps[k] = p[k] + 7.5;
        ts[k] = t[k] + 7.5;
    }
    CHECK(mse_cost(p2, t) == doctest::Approx(4.0 * mse_cost(p, t)).epsilon(1e-14));
    CHECK(mae_cost(ps, ts) == doctest::Approx(mae_cost(p, t)).epsilon(1e-14));

    const std::vector<double> empty;
    CHECK(error_code_of([&] { mse_cost(empty, empty); }) == ErrorCode::Empty);
    CHECK(error_code_of([&] { mae_cost(empty, empty); }) == ErrorCode::Empty);
    CHECK(error_code_of([&] { mse_cost(y, p); }) == ErrorCode::LengthMismatch);
    CHECK(error_code_of([&] { mae_cost(y, p); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("gradient_check on every architecture and mesh kind") {
    std::mt19937_64 rng(5);
    const auto data10 = synthetic_windows(3, 1, 60, 10);
    const auto data20 = synthetic_windows(3, 1, 60, 20);
    for (Arch arch : {Arch::I, Arch::II, Arch::III}) {
        for (const std::size_t T : {std::size_t{10}, std::size_t{20}}) {
            const auto& data = T == 10 ? data10 : data20;
            for (const Mesh& mesh : {Mesh::full(), random_mesh(rng, 0.3)}) {
                Network net(arch, T, 1, mesh, 100 + T);
                const double err = gradient_check(net, data.samples[7], 1e-6, 600, 1);
                CAPTURE(to_string(arch));
                CAPTURE(T);
                CHECK(err < 1e-5);
            }
        }
    }
}

TEST_CASE("gradient_check does not degrade when eps is halved") {
    const auto data = synthetic_windows(4, 1, 60, 10);
    Network net(Arch::I, 10, 1, reference_mesh(), 31);
    const double e1 = gradient_check(net, data.samples[3], 1e-6, 800, 2);
    const double e2 = gradient_check(net, data.samples[3], 5e-7, 800, 2);
    CHECK(e2 <= 10.0 * std::max(e1, 1e-15));
}

TEST_CASE("analytic gradient agrees with naive central differences on large entries") {
    const auto data = synthetic_windows(6, 1, 60, 10);
    const Sample& s = data.samples[11];
    Network net(Arch::I, 10, 1, reference_mesh(), 8);
    // Larger weights lift the gradients above the noise floor of plain differences.
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for_each_param(net.mutable_params(), net.mesh(), [&](double& v, bool active) { v = active ? u(rng) : 0.0; });
    const Params g = sample_gradient(net, s);
    Params& p = net.mutable_params();
    std::size_t compared = 0;
    auto compare = [&](double& slot, double analytic) {
        if (std::abs(analytic) < 1e-4) return;
        const double numeric = naive_slope(net, slot, s, 1e-5);
        CHECK(std::abs(analytic - numeric) <= 1e-6 * std::abs(analytic) + 1e-10);
        ++compared;
    };
    for (std::size_t t = 0; t < 10; ++t) {
        compare(p.combiner[t], g.combiner[t]);
        for (std::size_t gate = 0; gate < kGates; ++gate) {
            compare(p.m2[t].u[gate], g.m2[t].u[gate]);
            compare(p.m2[t].w[gate][2], g.m2[t].w[gate][2]);
            compare(p.m1[0][t].w[gate][0][1], g.m1[0][t].w[gate][0][1]);
            compare(p.m1[0][t].u[gate][4][0], g.m1[0][t].u[gate][4][0]);
        }
    }
    CHECK(compared > 30);
}

TEST_CASE("masked coordinates have exactly zero gradient") {
    const auto data = synthetic_windows(6, 1, 60, 10);
    std::mt19937_64 rng(10);
    const Mesh mesh = random_mesh(rng, 0.3);
    Network net(Arch::I, 10, 1, mesh, 8);
    const Params g = sample_gradient(net, data.samples[0]);
    for_each_param(g, mesh, [&](const double& v, bool active) {
        if (!active) CHECK(v == 0.0);
    });
}

TEST_CASE("one per-sample step equals w - lr * gradient") {
    const auto data = synthetic_windows(7, 1, 60, 10);
    WindowedDataset one = data;
    one.samples.resize(1);
    Network net(Arch::I, 10, 1, reference_mesh(), 12);
    const auto before = flat(net.params(), net.mesh());
    const auto grad = flat(sample_gradient(net, one.samples[0]), net.mesh());
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    backprop_epoch(net, one, cfg);
    const auto after = flat(net.params(), net.mesh());
    for (std::size_t k = 0; k < before.size(); ++k) CHECK(after[k] == before[k] - 0.05 * grad[k]);
}

TEST_CASE("zero learning rate leaves weights bitwise and reports forward-only cost") {
    const auto data = synthetic_windows(7, 2, 60, 10);
    Network net(Arch::I, 10, 1, Mesh::full(), 12);
    const auto before = flat(net.params(), net.mesh());
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_NOTHROW(cfg.validate());
    const double cost = backprop_epoch(net, data, cfg);
    CHECK(flat(net.params(), net.mesh()) == before);
    const auto pred = predict(net, data);
    std::vector<double> y;
    for (const auto& s : data.samples) y.push_back(s.y);
    CHECK(cost == doctest::Approx(mse_cost(pred, y)).epsilon(1e-14));
}

TEST_CASE("TrainConfig validation") {
    TrainConfig cfg;
    cfg.learning_rate = -0.1;
    CHECK(error_code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
    cfg.learning_rate = 0.001;
    cfg.epochs = 0;
    CHECK(error_code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("masked weights stay exactly zero through training") {
    const auto data = synthetic_windows(8, 1, 50, 10);
    std::mt19937_64 rng(11);
    for (BatchMode mode : {BatchMode::PerSample, BatchMode::FullBatch}) {
        const Mesh mesh = random_mesh(rng, 0.25);
        Network net(Arch::I, 10, 1, mesh, 2);
        TrainConfig cfg;
        cfg.epochs = 10;
        cfg.learning_rate = 0.1;
        cfg.batch = mode;
        train(net, data, nullptr, cfg);
        for_each_param(net.params(), mesh, [&](const double& v, bool active) {
            if (!active) CHECK(v == 0.0);
        });
    }
}

TEST_CASE("short training run is mostly non-increasing") {
    const auto data = synthetic_windows(9, 1, 40, 10);
    REQUIRE(data.size() == 30);
    Network net(Arch::I, 10, 1, Mesh::full(), 3);
    TrainConfig cfg;
    cfg.epochs = 50;
    const TrainReport r = train(net, data, nullptr, cfg);
    REQUIRE(r.cost_history.size() == 50);
    std::size_t ok = 0;
    for (std::size_t e = 1; e < 50; ++e) {
        CHECK(std::isfinite(r.cost_history[e]));
        CHECK(r.cost_history[e] >= 0.0);
        ok += r.cost_history[e] <= r.cost_history[e - 1];
    }
    CHECK(static_cast<double>(ok) >= 0.9 * 49.0);
}

TEST_CASE("training is seed-deterministic") {
    const auto data = synthetic_windows(10, 1, 50, 10);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.shuffle = true;
    cfg.seed = 44;
    Network a(Arch::II, 10, 1, reference_mesh(), 44), b(Arch::II, 10, 1, reference_mesh(), 44);
    const auto ra = train(a, data, &data, cfg);
    const auto rb = train(b, data, &data, cfg);
    CHECK(ra.cost_history == rb.cost_history);
    CHECK(ra.test_mae == rb.test_mae);
    CHECK(flat(a.params(), a.mesh()) == flat(b.params(), b.mesh()));
}

TEST_CASE("non-finite values raise NonFiniteGradient") {
    const auto data = synthetic_windows(10, 1, 50, 10);
    Network net(Arch::I, 10, 1, Mesh::full(), 1);
    net.mutable_params().combiner[0] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg;
    CHECK(error_code_of([&] { backprop_epoch(net, data, cfg); }) == ErrorCode::NonFiniteGradient);
}

TEST_CASE("evaluate composes predict and the cost functions") {
    const auto data = synthetic_windows(12, 2, 50, 10);
    Network net(Arch::I, 10, 1, Mesh::full(), 1);
    const auto pred = predict(net, data);
    std::vector<double> y;
    for (const auto& s : data.samples) y.push_back(s.y);
    const EvalResult r = evaluate(net, data);
    CHECK(std::abs(r.mae - mae_cost(pred, y)) <= 1e-15);
    CHECK(std::abs(r.mse - mse_cost(pred, y)) <= 1e-15);
    CHECK(r.mse >= 0.0);

    Network zero(Arch::I, 10, 1, Mesh::full(), 1);
    for (auto& w : zero.mutable_params().combiner) w = 0.0;
    WindowedDataset flat_targets = data;
    for (auto& s : flat_targets.samples) s.y = 0.0;
    const EvalResult z = evaluate(zero, flat_targets);
    CHECK(z.mse == 0.0);
    CHECK(z.mae == 0.0);

    WindowedDataset empty = data;
    empty.samples.clear();
    CHECK(error_code_of([&] { evaluate(net, empty); }) == ErrorCode::Empty);
}

TEST_CASE("train report round trip") {
    testutil::TempDir dir("report");
    TrainReport r;
    r.cost_history = {0.5, 0.25, 0.125};
    r.final_train_mse = 0.1;
    r.test_mse = 0.2;
    r.test_mae = 0.3;
    r.wall_time_s = 1.5;
    write_train_report(r, dir / "r.csv");
    const TrainReport back = read_train_report(dir / "r.csv");
    CHECK(back.cost_history == r.cost_history);
    CHECK(back.test_mae == 0.3);
    CHECK(back.wall_time_s == 1.5);
}
