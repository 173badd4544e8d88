#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "neuroevo/flightdata.hpp"
#include "neuroevo/lstm.hpp"

namespace neuroevo {

enum class BatchMode { PerSample, FullBatch };

struct TrainConfig {
    std::size_t epochs = 575;
    double learning_rate = 0.001;
    std::uint64_t seed = 1;  // weight init and shuffling
    bool shuffle = false;
    BatchMode batch = BatchMode::PerSample;
    double clip_norm = 0.0;  // 0 disables gradient clipping

    void validate() const;
};

struct TrainReport {
    std::vector<double> cost_history;  // per-epoch training MSE
    double final_train_mse = 0.0;
    double test_mse = 0.0;
    double test_mae = 0.0;
    double wall_time_s = 0.0;
};

struct EvalResult {
    double mse = 0.0;
    double mae = 0.0;
};

/// 0.5 * sum (y - y_hat)^2 / N
double mse_cost(std::span<const double> predictions, std::span<const double> targets);
/// sum |y - y_hat| / N
double mae_cost(std::span<const double> predictions, std::span<const double> targets);

/// Gradient of the single-sample cost 0.5 * (y - y_hat)^2. Masked entries are 0.
Params sample_gradient(const Network& net, const Sample& sample);

/// One pass over `data`. Per-sample mode updates after every sample in
/// dataset order (or a seeded shuffle); full-batch mode applies the mean
/// gradient once. Returns the epoch's mean cost, accumulated from the forward
/// passes made during the epoch. Throws NonFiniteGradient on NaN/inf.
double backprop_epoch(Network& net, const WindowedDataset& data, const TrainConfig& cfg, std::size_t epoch = 0);

/// Runs cfg.epochs epochs, then measures the final training MSE and, when a
/// test set is given, test MSE/MAE.
TrainReport train(Network& net, const WindowedDataset& train_data, const WindowedDataset* test_data,
                  const TrainConfig& cfg);

/// Largest |g_a - g_n| / max(1e-12, |g_a| + |g_n|) over unmasked parameters,
/// g_n from central differences with step `eps`. Each probe propagates the
/// perturbation as a separate difference term alongside the base forward pass,
/// so the quotient does not lose digits to cancellation even at eps = 1e-6.
/// Networks with more than `max_params` unmasked parameters are checked on a
/// seeded random subset of that size.
double gradient_check(const Network& net, const Sample& sample, double eps, std::size_t max_params = 30000,
                      std::uint64_t subset_seed = 0);

std::vector<double> predict(const Network& net, const WindowedDataset& data);
EvalResult evaluate(const Network& net, const WindowedDataset& data);

/// CSV "epoch,cost" followed by one "# key=value,..." summary line.
void write_train_report(const TrainReport& report, const std::filesystem::path& path);
TrainReport read_train_report(const std::filesystem::path& path);

}  // namespace neuroevo
