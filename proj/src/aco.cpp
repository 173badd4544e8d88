#include "neuroevo/aco.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "neuroevo/error.hpp"

namespace neuroevo {

void AcoConfig::validate() const {
    if (n_ants < 1) throw Error(ErrorCode::InvalidArgument, "n_ants must be >= 1");
    if (!(max_pheromone > 1.0)) throw Error(ErrorCode::InvalidArgument, "max_pheromone must be > 1");
    if (!(reward_factor > 1.0)) throw Error(ErrorCode::InvalidArgument, "reward_factor must be > 1");
}

Pheromones::Pheromones() {
    input.fill(1.0);
    for (auto& row : m1) row.fill(1.0);
    m2.fill(1.0);
}

bool Pheromones::within(double lo, double hi) const {
    auto ok = [&](double v) { return v >= lo && v <= hi; };
    for (double v : input)
        if (!ok(v)) return false;
    for (const auto& row : m1)
        for (double v : row)
            if (!ok(v)) return false;
    for (double v : m2)
        if (!ok(v)) return false;
    return true;
}

namespace {

// Cumulative walk over the pheromone mass with r uniform in [0, sum).
std::size_t roulette(const std::array<double, kWidth>& weights, std::mt19937_64& rng) {
    double sum = 0.0;
    for (double w : weights) sum += w;
    double r = std::uniform_real_distribution<double>(0.0, sum)(rng);
    std::size_t k = 0;
    while (k + 1 < weights.size() && r >= weights[k]) {
        r -= weights[k];
        ++k;
    }
    return k;
}

}  // namespace

Mesh generate_paths(const Pheromones& pher, std::size_t n_ants, std::mt19937_64& rng) {
    Mesh mesh;
    for (std::size_t ant = 0; ant < n_ants; ++ant) {
        const std::size_t i = roulette(pher.input, rng);
        const std::size_t j = roulette(pher.m1[i], rng);
        mesh.mark(i, j);
    }
    return mesh;
}

void update_pheromones(Pheromones& pher, const Mesh& mesh, const AcoConfig& cfg) {
    for (std::size_t i = 0; i < kWidth; ++i) {
        if (mesh.input[i]) pher.input[i] = std::min(pher.input[i] * cfg.reward_factor, cfg.max_pheromone);
        for (std::size_t j = 0; j < kWidth; ++j) {
            if (mesh.m1[i][j]) pher.m1[i][j] = std::min(pher.m1[i][j] * cfg.reward_factor, cfg.max_pheromone);
        }
    }
}

std::size_t Population::insert(double fitness, const Mesh& mesh) {
    if (!std::isfinite(fitness)) throw Error(ErrorCode::InvalidArgument, "fitness must be finite");
    auto it = std::upper_bound(entries_.begin(), entries_.end(), fitness,
                               [](double f, const PopulationEntry& e) { return f < e.fitness; });
    const auto rank = static_cast<std::size_t>(it - entries_.begin());
    entries_.insert(it, PopulationEntry{fitness, mesh});
    if (entries_.size() > capacity_) entries_.pop_back();
    return rank;
}

AcoState::AcoState(const AcoConfig& cfg, Arch arch, std::size_t window)
    : cfg_(cfg), arch_(arch), window_(window), population_(cfg.n_iterations), rng_(cfg.seed) {
    cfg_.validate();
}

Mesh AcoState::sample() { return generate_paths(pher_, cfg_.n_ants, rng_); }

std::size_t AcoState::report(double fitness, const Mesh& mesh, double wall_time_s) {
    const std::size_t rank = population_.insert(fitness, mesh);
    if (rank == 0) update_pheromones(pher_, mesh, cfg_);
    IterationLog row;
    row.iteration = log_.size() + 1;
    row.fitness = fitness;
    row.m1_count = mesh.m1_count();
    row.m2_count = mesh.m2_count();
    row.total_connections = count_weights(arch_, window_, mesh);
    row.wall_time_s = wall_time_s;
    row.rank = rank;
    log_.push_back(row);
    spdlog::debug("report {}: fitness {:.6f} rank {} m1 {} total {}", row.iteration, fitness, rank, row.m1_count,
                  row.total_connections);
    return rank;
}

void AcoState::report_failure(std::string reason) {
    spdlog::warn("evaluation failed: {}", reason);
    failures_.push_back({log_.size() + failures_.size() + 1, std::move(reason)});
}

EvolutionResult evolve(const AcoConfig& cfg, Arch arch, std::size_t window, const MeshEvaluator& evaluator) {
    AcoState state(cfg, arch, window);
    for (std::size_t it = 0; it < cfg.n_iterations; ++it) {
        const Mesh mesh = state.sample();
        const auto start = std::chrono::steady_clock::now();
        double fitness = 0.0;
        try {
            fitness = evaluator(mesh);
            if (!std::isfinite(fitness)) throw Error(ErrorCode::NonFiniteGradient, "non-finite fitness");
        } catch (const std::exception& e) {
            state.report_failure(e.what());
            continue;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        state.report(fitness, mesh, secs);
    }
    EvolutionResult result;
    result.population = state.population();
    result.pheromones = state.pheromones();
    result.log = state.log();
    result.failures = state.failures();
    return result;
}

void write_evolution_log(const std::vector<IterationLog>& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << "iteration,fitness,m1_count,m2_count,total_connections,wall_time_s\n";
    for (const auto& r : log) {
        out << fmt::format("{},{:.17g},{},{},{},{:.6f}\n", r.iteration, r.fitness, r.m1_count, r.m2_count,
                           r.total_connections, r.wall_time_s);
    }
}

std::vector<IterationLog> read_evolution_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("iteration,fitness", 0) != 0) {
        throw Error(ErrorCode::ParseError, path.string() + " is not an evolution log");
    }
    std::vector<IterationLog> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        IterationLog r;
        char c1, c2, c3, c4, c5;
        if (!(ss >> r.iteration >> c1 >> r.fitness >> c2 >> r.m1_count >> c3 >> r.m2_count >> c4 >>
              r.total_connections >> c5 >> r.wall_time_s)) {
            throw Error(ErrorCode::ParseError, fmt::format("{}:{}: malformed row", path.string(), lineno));
        }
        rows.push_back(r);
    }
    return rows;
}

std::vector<IterationLog> top_k(std::vector<IterationLog> log, std::size_t k) {
    std::stable_sort(log.begin(), log.end(),
                     [](const IterationLog& a, const IterationLog& b) { return a.fitness < b.fitness; });
    if (log.size() > k) log.resize(k);
    return log;
}

void write_top_table(const std::vector<IterationLog>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << "rank,fitness,m1_connections,m2_connections,total_connections\n";
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out << fmt::format("{},{:.6f},{},{},{}\n", k + 1, rows[k].fitness, rows[k].m1_count, rows[k].m2_count,
                           rows[k].total_connections);
    }
}

}  // namespace neuroevo
