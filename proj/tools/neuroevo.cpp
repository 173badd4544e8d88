#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "neuroevo/app.hpp"
#include "neuroevo/error.hpp"

namespace fs = std::filesystem;
using namespace neuroevo;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> ants, iterations, epochs, horizon;
    std::optional<std::string> arch;

    void add_common(CLI::App* cmd) {
        cmd->add_option("--config", config, "Run configuration (key = value lines)")->required();
        cmd->add_option("--seed", seed, "Seed for weights, shuffling and ACO sampling");
        cmd->add_option("--out", out, "Output directory");
        cmd->add_option("--epochs", epochs, "Training epochs");
        cmd->add_option("--horizon", horizon, "Prediction horizon in seconds");
        cmd->add_option("--arch", arch, "Architecture: I, II or III");
    }

    RunConfig resolve() const {
        RunConfig cfg = load_run_config(config);
        if (seed) cfg.set("seed", std::to_string(*seed));
        if (out) cfg.out_dir = *out;
        if (ants) cfg.aco.n_ants = *ants;
        if (iterations) cfg.aco.n_iterations = *iterations;
        if (epochs) cfg.train.epochs = *epochs;
        if (horizon) cfg.horizon = *horizon;
        if (arch) cfg.arch = parse_arch(*arch);
        cfg.finalize();
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Masked-gate LSTM training and ant colony mesh evolution"};
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    std::size_t flights = 30, length = 600, channels = 16;
    std::string out_dir = "data";
    auto* synth = app.add_subcommand("synth", "Write a seeded synthetic flight corpus");
    synth->add_option("--seed", seed, "Corpus seed");
    synth->add_option("--flights", flights, "Number of flights");
    synth->add_option("--length", length, "Flight length in seconds");
    synth->add_option("--channels", channels, "Channels per flight, target included (2..16)");
    synth->add_option("--out", out_dir, "Output directory");

    std::string data_dir, ranking_out = "ranking.csv", target = kDefaultTarget;
    auto* correlate = app.add_subcommand("correlate", "Rank channels by cross-correlation with the target");
    correlate->add_option("--data", data_dir, "Flight CSV directory")->required();
    correlate->add_option("--out", ranking_out, "Ranking CSV");
    correlate->add_option("--target", target, "Target channel");

    Overrides train_opts;
    auto* train_cmd = app.add_subcommand("train", "Train a fully connected network");
    train_opts.add_common(train_cmd);

    Overrides evolve_opts;
    std::string role = "local";
    auto* evolve_cmd = app.add_subcommand("evolve", "Evolve gate meshes with ant colony optimization");
    evolve_opts.add_common(evolve_cmd);
    evolve_cmd->add_option("--role", role, "master, worker or local")
        ->check(CLI::IsMember({"master", "worker", "local"}));
    evolve_cmd->add_option("--ants", evolve_opts.ants, "Ants per sampled mesh");
    evolve_cmd->add_option("--iterations", evolve_opts.iterations, "Successful evaluations to collect");

    std::string model, eval_data, eval_out = "evaluation";
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a saved model on a flight directory");
    evaluate_cmd->add_option("--model", model, "Model file")->required();
    evaluate_cmd->add_option("--data", eval_data, "Flight CSV directory")->required();
    evaluate_cmd->add_option("--out", eval_out, "Output directory");

    std::string log_path, report_out = "top_networks.csv";
    std::size_t top = 30;
    auto* report_cmd = app.add_subcommand("report", "Top-K table of an evolution log");
    report_cmd->add_option("--log", log_path, "evolution_log.csv")->required();
    report_cmd->add_option("--top", top, "Rows to keep");
    report_cmd->add_option("--out", report_out, "Output CSV");

    CLI11_PARSE(app, argc, argv);
    configure_logging();

    try {
        if (*synth) {
            const auto r = cmd_synth(seed, flights, length, channels, out_dir);
            fmt::print("wrote {} flights to {}\n{}", r.files.size(), out_dir, r.metadata.describe());
        } else if (*correlate) {
            const auto ranking = cmd_correlate(data_dir, ranking_out, target);
            for (const auto& e : ranking.entries) fmt::print("{:<8} {:.6f}\n", e.name, e.score);
        } else if (*train_cmd) {
            const RunConfig cfg = train_opts.resolve();
            const auto r = cmd_train(cfg);
            fmt::print("test_mse={:.6g} test_mae={:.6g} model={}\n", r.test_mse, r.test_mae,
                       (cfg.out_dir / "model.neac").string());
        } else if (*evolve_cmd) {
            return cmd_evolve(evolve_opts.resolve(), parse_role(role));
        } else if (*evaluate_cmd) {
            const auto r = cmd_evaluate(model, eval_data, eval_out);
            for (const auto& [id, e] : r.per_flight) fmt::print("{:<16} mse={:.6g} mae={:.6g}\n", id, e.mse, e.mae);
            fmt::print("{:<16} mse={:.6g} mae={:.6g}\n", "all", r.overall.mse, r.overall.mae);
        } else if (*report_cmd) {
            const auto r = cmd_report(log_path, top, report_out);
            const auto& s = r.stats;
            fmt::print("rank,fitness,m1_connections,m2_connections,total_connections\n");
            for (std::size_t k = 0; k < r.top.size(); ++k) {
                const auto& row = r.top[k];
                fmt::print("{},{:.6f},{},{},{}\n", k + 1, row.fitness, row.m1_count, row.m2_count,
                           row.total_connections);
            }
            fmt::print("rows={} m1 mean={:.1f} min={} max={} total mean={:.1f} min={} max={}\n", s.rows, s.mean_m1,
                       s.min_m1, s.max_m1, s.mean_total, s.min_total, s.max_total);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
