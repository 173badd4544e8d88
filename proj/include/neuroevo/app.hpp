#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "neuroevo/aco.hpp"
#include "neuroevo/dist.hpp"
#include "neuroevo/flightdata.hpp"
#include "neuroevo/lstm.hpp"
#include "neuroevo/trainer.hpp"

namespace neuroevo {

/// Settings of a train or evolve run. Text form is one `key = value` per
/// line; `#` starts a comment. Unknown keys are rejected.
///
///   train_dir, test_dir       flight CSV directories
///   channels                  comma list of input channels (target included),
///                             or "auto": target plus the n_channels-1 best
///                             correlated training channels
///   n_channels                used by channels=auto (default 15)
///   target                    target channel (default Vib)
///   arch, window, horizon     network shape; window 0 picks the arch default
///   epochs, learning_rate, shuffle, batch (per_sample|full_batch), clip_norm
///   seed                      weight init, shuffling and ACO sampling
///   n_ants, n_iterations, max_pheromone, reward_factor
///   workers                   worker threads for evolve --role local
///   master_bind               listen address of evolve --role master
///   master_address            address evolve --role worker connects to
///   timeout_floor_s, timeout_multiplier, drain_timeout_s
///   connect_attempts          worker connection attempts before giving up
///   top_k                     rows of the evolution top table
///   out_dir                   output directory
struct RunConfig {
    std::filesystem::path train_dir;
    std::filesystem::path test_dir;
    std::vector<std::string> channels;  // empty: auto
    std::size_t n_channels = kMaxParameters;
    std::string target = kDefaultTarget;

    Arch arch = Arch::I;
    std::size_t window = 0;
    std::size_t horizon = 1;

    TrainConfig train;
    AcoConfig aco;

    std::size_t workers = 2;
    std::string master_bind = "0.0.0.0:5555";
    std::string master_address = "127.0.0.1:5555";
    double timeout_floor_s = 60.0;
    double timeout_multiplier = 10.0;
    double drain_timeout_s = 60.0;
    int connect_attempts = 6;
    std::size_t top_k = 30;

    std::filesystem::path out_dir = "out";

    /// Sets one key; throws InvalidArgument for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    /// Propagates `seed` and resolves window 0 to the arch default.
    void finalize();
    std::string to_text() const;
};

RunConfig parse_run_config(std::istream& in, const std::string& origin = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Windowed, normalized train and test sets plus the input specification a
/// trained network carries.
struct PreparedData {
    InputSpec spec;
    WindowedDataset train;
    WindowedDataset test;
};

PreparedData prepare_data(const RunConfig& cfg);

/// Hash over everything a worker must share with the master for its fitness
/// values to be comparable: network shape, training settings and data.
dist::Digest run_digest(const RunConfig& cfg, const PreparedData& data);

/// Builds a network for the mesh, trains it and returns its test MAE.
MeshEvaluator training_evaluator(const RunConfig& cfg, const PreparedData& data);

/// Reads NEUROEVO_LOG (error, info, debug) and configures the default logger.
void configure_logging();

// ---- commands --------------------------------------------------------------

struct SynthResult {
    std::vector<std::filesystem::path> files;
    SynthMetadata metadata;
};

/// Writes flight CSVs and synth_metadata.txt into `out_dir`.
SynthResult cmd_synth(std::uint64_t seed, std::size_t n_flights, std::size_t length_s, std::size_t n_channels,
                      const std::filesystem::path& out_dir);

ParameterRanking cmd_correlate(const std::filesystem::path& data_dir, const std::filesystem::path& out_csv,
                               const std::string& target = kDefaultTarget);

/// Writes model.neac, train_report.csv and resolved_config.txt.
TrainReport cmd_train(const RunConfig& cfg);

enum class Role { Local, Master, Worker };
Role parse_role(const std::string& text);

/// Local and master roles write evolution_log.csv, top_networks.csv,
/// failures.csv, best_mesh.neac, best_model.neac (the best mesh retrained)
/// and resolved_config.txt. Returns the exit status.
int cmd_evolve(const RunConfig& cfg, Role role);

struct EvaluateResult {
    EvalResult overall;
    std::vector<std::pair<std::string, EvalResult>> per_flight;
};

/// Writes evaluation.csv plus predictions_<flight>.csv (time,actual,predicted)
/// into `out_dir`, with values in normalized units.
EvaluateResult cmd_evaluate(const std::filesystem::path& model, const std::filesystem::path& data_dir,
                            const std::filesystem::path& out_dir);

struct ConnectionStats {
    std::size_t rows = 0;
    double mean_m1 = 0.0;
    std::size_t min_m1 = 0;
    std::size_t max_m1 = 0;
    double mean_total = 0.0;
    std::size_t min_total = 0;
    std::size_t max_total = 0;
};

ConnectionStats connection_stats(const std::vector<IterationLog>& rows);

struct ReportResult {
    std::vector<IterationLog> top;
    ConnectionStats stats;
};

/// Top-K table of an evolution log; throws Empty for a log without rows.
ReportResult cmd_report(const std::filesystem::path& log, std::size_t k, const std::filesystem::path& out_csv);

}  // namespace neuroevo
