#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "neuroevo/lstm.hpp"

namespace neuroevo {

struct AcoConfig {
    std::size_t n_ants = 200;
    std::size_t n_iterations = 1000;
    double max_pheromone = 20.0;
    double reward_factor = 1.15;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Pheromone levels on input nodes and input->hidden edges, all in
/// [1, max_pheromone]. `m2` is carried for format fidelity and never sampled
/// or reinforced.
struct Pheromones {
    std::array<double, kWidth> input;
    std::array<std::array<double, kWidth>, kWidth> m1;
    std::array<double, kWidth> m2;

    Pheromones();  // every value 1

    bool within(double lo, double hi) const;
    friend bool operator==(const Pheromones&, const Pheromones&) = default;
};

/// Each ant walks input -> hidden by roulette selection proportional to
/// pheromone; the mesh is the union of all walks.
Mesh generate_paths(const Pheromones& pher, std::size_t n_ants, std::mt19937_64& rng);

/// Multiplies every marked input and m1 edge by the reward factor, capped at
/// the maximum. Never decreases a value.
void update_pheromones(Pheromones& pher, const Mesh& mesh, const AcoConfig& cfg);

struct PopulationEntry {
    double fitness = 0.0;
    Mesh mesh;
};

/// Fitness-ordered archive, ascending (lower test error is better).
class Population {
public:
    explicit Population(std::size_t capacity) : capacity_(capacity) {}

    /// In-order insert. Equal fitness ranks after incumbents, so rank 0 means
    /// strictly better than every entry. Overflow evicts the worst entry.
    std::size_t insert(double fitness, const Mesh& mesh);

    const std::vector<PopulationEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t capacity() const { return capacity_; }
    const PopulationEntry& best() const { return entries_.front(); }

private:
    std::size_t capacity_;
    std::vector<PopulationEntry> entries_;
};

struct IterationLog {
    std::size_t iteration = 0;
    double fitness = 0.0;
    std::size_t m1_count = 0;
    std::size_t m2_count = 0;
    std::size_t total_connections = 0;
    double wall_time_s = 0.0;
    std::size_t rank = 0;
};

struct FailedEvaluation {
    std::size_t iteration = 0;
    std::string reason;
};

/// Master-side ACO state: pheromones, population, sampler and logs. All
/// mutation goes through one owner.
class AcoState {
public:
    AcoState(const AcoConfig& cfg, Arch arch, std::size_t window);

    Mesh sample();
    /// Inserts a result and reinforces pheromones on a new best. Returns the rank.
    std::size_t report(double fitness, const Mesh& mesh, double wall_time_s);
    void report_failure(std::string reason);

    const AcoConfig& config() const { return cfg_; }
    Arch arch() const { return arch_; }
    std::size_t window() const { return window_; }
    const Pheromones& pheromones() const { return pher_; }
    const Population& population() const { return population_; }
    const std::vector<IterationLog>& log() const { return log_; }
    const std::vector<FailedEvaluation>& failures() const { return failures_; }
    std::size_t reports() const { return log_.size(); }

private:
    AcoConfig cfg_;
    Arch arch_;
    std::size_t window_;
    Pheromones pher_;
    Population population_;
    std::mt19937_64 rng_;
    std::vector<IterationLog> log_;
    std::vector<FailedEvaluation> failures_;
};

/// Maps a mesh to its fitness; throws to signal a failed evaluation.
using MeshEvaluator = std::function<double(const Mesh&)>;

struct EvolutionResult {
    Population population{0};
    Pheromones pheromones;
    std::vector<IterationLog> log;
    std::vector<FailedEvaluation> failures;

    bool has_best() const { return !population.empty(); }
    const Mesh& best_mesh() const { return population.best().mesh; }
};

/// Serial evolution: n_iterations sample/evaluate/report rounds. A throwing
/// evaluator is logged as a failure and its iteration adds nothing to the
/// population.
EvolutionResult evolve(const AcoConfig& cfg, Arch arch, std::size_t window, const MeshEvaluator& evaluator);

/// CSV: iteration,fitness,m1_count,m2_count,total_connections,wall_time_s
void write_evolution_log(const std::vector<IterationLog>& log, const std::filesystem::path& path);
std::vector<IterationLog> read_evolution_log(const std::filesystem::path& path);

/// The K best rows ascending by fitness (stable for ties).
std::vector<IterationLog> top_k(std::vector<IterationLog> log, std::size_t k);

/// CSV: rank,fitness,m1_connections,m2_connections,total_connections
void write_top_table(const std::vector<IterationLog>& rows, const std::filesystem::path& path);

}  // namespace neuroevo
