#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "neuroevo/aco.hpp"
#include "neuroevo/error.hpp"
#include "test_util.hpp"

using namespace neuroevo;
using testutil::error_code_of;

namespace {

bool marks_only(const Mesh& m) {
    for (std::size_t i = 0; i < kWidth; ++i)
        for (std::size_t j = 0; j < kWidth; ++j)
            if (m.m1[i][j] && !(m.input[i] && m.m2[j])) return false;
    for (std::size_t i = 0; i < kWidth; ++i) {
        bool row = false;
        for (std::size_t j = 0; j < kWidth; ++j) row = row || m.m1[i][j];
        if (m.input[i] != row) return false;
    }
    for (std::size_t j = 0; j < kWidth; ++j) {
        bool col = false;
        for (std::size_t i = 0; i < kWidth; ++i) col = col || m.m1[i][j];
        if (m.m2[j] != col) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("a single ant marks exactly one path") {
    std::mt19937_64 rng(1);
    for (int k = 0; k < 50; ++k) {
        const Mesh m = generate_paths(Pheromones{}, 1, rng);
        CHECK(m.m1_count() == 1);
        CHECK(m.input_count() == 1);
        CHECK(m.m2_count() == 1);
    }
}

TEST_CASE("roulette frequencies match pheromone proportions") {
    Pheromones p;
    p.input[0] = 20.0;
    p.m1[0][0] = 20.0;
    std::mt19937_64 rng(2024);
    const int n = 10000;
    int input0 = 0, edge00 = 0;
    for (int k = 0; k < n; ++k) {
        const Mesh m = generate_paths(p, 1, rng);
        input0 += m.input[0];
        edge00 += m.m1[0][0];
    }
    const double share = 20.0 / 35.0;
    CHECK(std::abs(input0 / double(n) - share) <= 0.02);
    CHECK(std::abs(edge00 / double(n) - share * share) <= 0.02);
}

TEST_CASE("generated meshes are sets and valid") {
    Pheromones p;
    for (auto& v : p.input) v = 20.0;
    for (auto& row : p.m1)
        for (auto& v : row) v = 20.0;
    std::mt19937_64 rng(3);
    const Mesh big = generate_paths(p, 256 * 16, rng);
    CHECK(big.m1_count() <= 256);
    CHECK(marks_only(big));

    std::mt19937_64 rng2(4);
    for (std::size_t ants : {1, 5, 30, 200}) {
        const Mesh m = generate_paths(Pheromones{}, ants, rng2);
        CHECK(m.valid());
        CHECK(marks_only(m));
        CHECK(m.m1_count() <= ants);
    }
}

TEST_CASE("pheromone updates") {
    AcoConfig cfg;
    Pheromones p;
    Mesh m;
    m.mark(2, 5);
    update_pheromones(p, m, cfg);
    CHECK(p.input[2] == 1.15);
    CHECK(p.m1[2][5] == 1.15);
    CHECK(p.input[3] == 1.0);
    CHECK(p.m1[2][4] == 1.0);
    CHECK(p.m2[5] == 1.0);

    Pheromones q;
    q.m1[2][5] = 19.0;
    update_pheromones(q, m, cfg);
    CHECK(q.m1[2][5] == 20.0);

    const Pheromones before = p;
    update_pheromones(p, Mesh::empty(), cfg);
    CHECK(p == before);
    CHECK(p.within(1.0, 20.0));
}

TEST_CASE("population ordering and rank") {
    Population pop(10);
    Mesh m;
    CHECK(pop.insert(0.05, m) == 0);
    CHECK(pop.insert(0.04, m) == 0);
    CHECK(pop.insert(0.045, m) == 1);
    CHECK(pop.insert(0.04, m) == 1);
    CHECK(pop.best().fitness == 0.04);

    Population small(2);
    small.insert(0.3, m);
    small.insert(0.1, m);
    CHECK(small.insert(0.2, m) == 1);
    REQUIRE(small.size() == 2);
    CHECK(small.entries()[0].fitness == 0.1);
    CHECK(small.entries()[1].fitness == 0.2);
}

TEST_CASE("population insert matches a sorted-insert oracle") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> d(0, 20);
    Population pop(1000);
    std::vector<double> oracle;
    for (int k = 0; k < 300; ++k) {
        const double f = d(rng) / 100.0;
        const auto pos = std::upper_bound(oracle.begin(), oracle.end(), f);
        const std::size_t want = static_cast<std::size_t>(pos - oracle.begin());
        oracle.insert(pos, f);
        CHECK(pop.insert(f, Mesh{}) == want);
    }
    for (std::size_t k = 0; k < oracle.size(); ++k) CHECK(pop.entries()[k].fitness == oracle[k]);
}

TEST_CASE("AcoState invariants over a seeded run") {
    AcoConfig cfg;
    cfg.n_ants = 30;
    cfg.n_iterations = 200;
    cfg.seed = 77;
    AcoState state(cfg, Arch::I, 10);
    std::mt19937_64 noise(1);
    std::uniform_real_distribution<double> u(0.0, 0.01);
    double best = INFINITY;
    for (std::size_t k = 0; k < cfg.n_iterations; ++k) {
        const Mesh m = state.sample();
        CHECK(m.valid());
        CHECK(m.m1_count() <= cfg.n_ants);
        const Pheromones before = state.pheromones();
        const double fitness = 1.0 / (1.0 + static_cast<double>(m.m1_count())) + u(noise);
        const std::size_t rank = state.report(fitness, m, 0.0);
        const bool changed = !(state.pheromones() == before);
        if (changed) CHECK(rank == 0);
        if (rank == 0) {
            Pheromones expect = before;
            update_pheromones(expect, m, cfg);
            CHECK(state.pheromones() == expect);
        }
        CHECK(state.pheromones().within(1.0, cfg.max_pheromone));
        CHECK(state.population().best().fitness <= best);
        best = state.population().best().fitness;
        CHECK(state.log().back().rank == rank);
    }
    CHECK(state.reports() == cfg.n_iterations);
}

TEST_CASE("evolve rewards denser meshes when density is fitter") {
    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        AcoConfig cfg;
        cfg.n_ants = 30;
        cfg.n_iterations = 50;
        cfg.seed = seed;
        const auto r = evolve(cfg, Arch::I, 10, [](const Mesh& m) { return -static_cast<double>(m.m1_count()); });
        wins += r.best_mesh().m1_count() >= r.log.front().m1_count;
    }
    CHECK(wins >= 45);
}

TEST_CASE("constant fitness rewards only the first insertion") {
    AcoConfig cfg;
    cfg.n_ants = 10;
    cfg.n_iterations = 20;
    const auto r = evolve(cfg, Arch::I, 10, [](const Mesh&) { return 0.5; });
    std::size_t zero_ranks = 0;
    for (const auto& row : r.log) zero_ranks += row.rank == 0;
    CHECK(zero_ranks == 1);
    const Mesh& first = r.population.entries().front().mesh;
    for (std::size_t i = 0; i < kWidth; ++i) {
        CHECK(r.pheromones.input[i] == (first.input[i] ? 1.15 : 1.0));
        for (std::size_t j = 0; j < kWidth; ++j) CHECK(r.pheromones.m1[i][j] == (first.m1[i][j] ? 1.15 : 1.0));
    }
}

TEST_CASE("zero iterations and failing evaluators") {
    AcoConfig cfg;
    cfg.n_iterations = 0;
    const auto r = evolve(cfg, Arch::I, 10, [](const Mesh&) { return 1.0; });
    CHECK(r.population.empty());
    CHECK(r.pheromones == Pheromones{});

    cfg.n_iterations = 6;
    int calls = 0;
    const auto f = evolve(cfg, Arch::I, 10, [&](const Mesh&) -> double {
        if (++calls % 2 == 0) throw std::runtime_error("diverged");
        return 1.0 / calls;
    });
    CHECK(f.failures.size() == 3);
    CHECK(f.population.size() == 3);
    CHECK(f.failures.front().reason.find("diverged") != std::string::npos);
}

TEST_CASE("AcoConfig validation") {
    AcoConfig cfg;
    cfg.n_ants = 0;
    CHECK(error_code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
    cfg = AcoConfig{};
    cfg.reward_factor = 1.0;
    CHECK(error_code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
    cfg = AcoConfig{};
    cfg.max_pheromone = 1.0;
    CHECK(error_code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("evolution log and top-k tables") {
    testutil::TempDir dir("aco");
    std::vector<IterationLog> log;
    for (std::size_t k = 0; k < 5; ++k)
        log.push_back({k, 0.1 * static_cast<double>((k * 3) % 5), 100 + k, 16, 8000 + k, 0.5, 0});
    log[4].fitness = log[1].fitness;
    write_evolution_log(log, dir / "log.csv");
    const auto back = read_evolution_log(dir / "log.csv");
    REQUIRE(back.size() == 5);
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(back[k].iteration == log[k].iteration);
        CHECK(back[k].fitness == log[k].fitness);
        CHECK(back[k].m1_count == log[k].m1_count);
        CHECK(back[k].total_connections == log[k].total_connections);
    }
    const auto top = top_k(back, 4);
    REQUIRE(top.size() == 4);
    CHECK(top[0].iteration == 0);
    CHECK(top[1].iteration == 2);
    CHECK(top[2].iteration == 1);
    CHECK(top[3].iteration == 4);
    write_top_table(top, dir / "top.csv");
    const std::string text = testutil::read_text(dir / "top.csv");
    CHECK(text.rfind("rank,fitness,m1_connections,m2_connections,total_connections", 0) == 0);
}
