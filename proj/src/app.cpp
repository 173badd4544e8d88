#include "neuroevo/app.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "neuroevo/error.hpp"
#include "neuroevo/model_io.hpp"

namespace fs = std::filesystem;

namespace neuroevo {

// ---- config ----------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    unsigned long long n = 0;
    try {
        if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
        n = std::stoull(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw Error(ErrorCode::InvalidArgument, fmt::format("{}: '{}' is not a count", key, v));
    return static_cast<std::size_t>(n);
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw Error(ErrorCode::InvalidArgument, fmt::format("{}: '{}' is not a number", key, v));
    return d;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(ErrorCode::InvalidArgument, fmt::format("{}: '{}' is not a boolean", key, v));
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
    return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    const std::string& v = value;
    if (key == "train_dir") train_dir = v;
    else if (key == "test_dir") test_dir = v;
    else if (key == "channels") channels = (v == "auto") ? std::vector<std::string>{} : split_list(v);
    else if (key == "n_channels") n_channels = to_size(key, v);
    else if (key == "target") target = v;
    else if (key == "arch") arch = parse_arch(v);
    else if (key == "window") window = to_size(key, v);
    else if (key == "horizon") horizon = to_size(key, v);
    else if (key == "epochs") train.epochs = to_size(key, v);
    else if (key == "learning_rate") train.learning_rate = to_double(key, v);
    else if (key == "shuffle") train.shuffle = to_bool(key, v);
    else if (key == "batch") {
        if (v == "per_sample") train.batch = BatchMode::PerSample;
        else if (v == "full_batch") train.batch = BatchMode::FullBatch;
        else throw Error(ErrorCode::InvalidArgument, "batch must be per_sample or full_batch");
    } else if (key == "clip_norm") train.clip_norm = to_double(key, v);
    else if (key == "seed") train.seed = aco.seed = to_size(key, v);
    else if (key == "n_ants") aco.n_ants = to_size(key, v);
    else if (key == "n_iterations") aco.n_iterations = to_size(key, v);
    else if (key == "max_pheromone") aco.max_pheromone = to_double(key, v);
    else if (key == "reward_factor") aco.reward_factor = to_double(key, v);
    else if (key == "workers") workers = to_size(key, v);
    else if (key == "master_bind") master_bind = v;
    else if (key == "master_address") master_address = v;
    else if (key == "timeout_floor_s") timeout_floor_s = to_double(key, v);
    else if (key == "timeout_multiplier") timeout_multiplier = to_double(key, v);
    else if (key == "drain_timeout_s") drain_timeout_s = to_double(key, v);
    else if (key == "connect_attempts") connect_attempts = static_cast<int>(to_size(key, v));
    else if (key == "top_k") top_k = to_size(key, v);
    else if (key == "out_dir") out_dir = v;
    else throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
}

void RunConfig::finalize() {
    if (window == 0) window = default_window(arch);
    if (horizon == 0) throw Error(ErrorCode::InvalidArgument, "horizon must be >= 1");
    if (channels.size() > kMaxParameters) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("at most {} channels", kMaxParameters));
    }
    if (channels.empty() && (n_channels < 2 || n_channels > kMaxParameters)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("n_channels must lie in 2..{}", kMaxParameters));
    }
    if (!channels.empty() && std::find(channels.begin(), channels.end(), target) == channels.end()) {
        throw Error(ErrorCode::InvalidArgument, "channels must include the target " + target);
    }
    if (workers == 0) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
    if (connect_attempts < 1) throw Error(ErrorCode::InvalidArgument, "connect_attempts must be >= 1");
    train.validate();
    aco.validate();
}

std::string RunConfig::to_text() const {
    std::string s;
    auto kv = [&](const char* k, const std::string& v) { s += fmt::format("{} = {}\n", k, v); };
    kv("train_dir", train_dir.string());
    kv("test_dir", test_dir.string());
    kv("channels", channels.empty() ? "auto" : join(channels));
    kv("n_channels", std::to_string(n_channels));
    kv("target", target);
    kv("arch", to_string(arch));
    kv("window", std::to_string(window));
    kv("horizon", std::to_string(horizon));
    kv("epochs", std::to_string(train.epochs));
    kv("learning_rate", fmt::format("{:.17g}", train.learning_rate));
    kv("shuffle", train.shuffle ? "true" : "false");
    kv("batch", train.batch == BatchMode::PerSample ? "per_sample" : "full_batch");
    kv("clip_norm", fmt::format("{:.17g}", train.clip_norm));
    kv("seed", std::to_string(train.seed));
    kv("n_ants", std::to_string(aco.n_ants));
    kv("n_iterations", std::to_string(aco.n_iterations));
    kv("max_pheromone", fmt::format("{:.17g}", aco.max_pheromone));
    kv("reward_factor", fmt::format("{:.17g}", aco.reward_factor));
    kv("workers", std::to_string(workers));
    kv("master_bind", master_bind);
    kv("master_address", master_address);
    kv("timeout_floor_s", fmt::format("{:.17g}", timeout_floor_s));
    kv("timeout_multiplier", fmt::format("{:.17g}", timeout_multiplier));
    kv("drain_timeout_s", fmt::format("{:.17g}", drain_timeout_s));
    kv("connect_attempts", std::to_string(connect_attempts));
    kv("top_k", std::to_string(top_k));
    kv("out_dir", out_dir.string());
    return s;
}

RunConfig parse_run_config(std::istream& in, const std::string& origin) {
    RunConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::ParseError, fmt::format("{}:{}: expected key = value", origin, lineno));
        }
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const Error& e) {
            throw Error(e.code(), fmt::format("{}:{}: {}", origin, lineno, e.what()));
        }
    }
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
    return parse_run_config(in, path.string());
}

// ---- data ------------------------------------------------------------------

namespace {

std::vector<FlightSeries> load_all_columns(const fs::path& dir, const std::string& target) {
    const auto files = list_flight_files(dir);
    if (files.empty()) throw Error(ErrorCode::NoFlights, "no .csv files in " + dir.string());
    const auto header = read_csv_header(files.front());
    return load_flight_dir(dir, header, target);
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg) {
    if (cfg.train_dir.empty() || cfg.test_dir.empty()) {
        throw Error(ErrorCode::InvalidArgument, "train_dir and test_dir must be set");
    }
    std::vector<std::string> channels = cfg.channels;
    std::vector<FlightSeries> train_raw;
    if (channels.empty()) {
        train_raw = load_all_columns(cfg.train_dir, cfg.target);
        const auto ranges = compute_ranges(train_raw);
        const auto ranking = rank_parameters(normalize_all(train_raw, ranges));
        for (const auto& e : ranking.entries) {
            if (channels.size() + 1 >= cfg.n_channels) break;
            channels.push_back(e.name);
        }
        channels.push_back(cfg.target);
        spdlog::info("auto-selected channels: {}", join(channels));
    } else {
        train_raw = load_flight_dir(cfg.train_dir, channels, cfg.target);
    }
    const auto test_raw = load_flight_dir(cfg.test_dir, channels, cfg.target);

    PreparedData out;
    out.spec.channel_order = channels;
    out.spec.target = cfg.target;
    NormalizationRanges all = compute_ranges(train_raw);
    for (const auto& name : channels) out.spec.ranges[name] = all.at(name);
    auto project = [&](const std::vector<FlightSeries>& flights) {
        std::vector<FlightSeries> kept;
        for (const auto& f : flights) {
            FlightSeries g;
            g.id = f.id;
            g.length_s = f.length_s;
            g.target = f.target;
            for (const auto& name : channels) g.channels.push_back(f.channel(name));
            kept.push_back(std::move(g));
        }
        return normalize_all(kept, out.spec.ranges);
    };
    out.train = make_windows(project(train_raw), cfg.window, cfg.horizon, channels);
    out.test = make_windows(project(test_raw), cfg.window, cfg.horizon, channels);
    spdlog::info("data: {} train samples from {} flights, {} test samples from {} flights", out.train.size(),
                 out.train.flight_ids.size(), out.test.size(), out.test.flight_ids.size());
    return out;
}

dist::Digest run_digest(const RunConfig& cfg, const PreparedData& data) {
    std::string s = fmt::format("arch={};T={};H={};epochs={};lr={:.17g};seed={};shuffle={};batch={};clip={:.17g}\n",
                                to_string(cfg.arch), cfg.window, cfg.horizon, cfg.train.epochs,
                                cfg.train.learning_rate, cfg.train.seed, cfg.train.shuffle,
                                static_cast<int>(cfg.train.batch), cfg.train.clip_norm);
    s += "channels=" + join(data.spec.channel_order) + ";target=" + data.spec.target + "\n";
    for (const auto& [name, r] : data.spec.ranges) s += fmt::format("{}:{:.17g}:{:.17g}\n", name, r.min, r.max);
    for (const auto* set : {&data.train, &data.test}) {
        s += fmt::format("flights={};samples={}\n", join(set->flight_ids), set->size());
    }
    return dist::config_digest(s);
}

MeshEvaluator training_evaluator(const RunConfig& cfg, const PreparedData& data) {
    const Arch arch = cfg.arch;
    const std::size_t window = cfg.window;
    const std::size_t horizon = cfg.horizon;
    const TrainConfig train_cfg = cfg.train;
    const PreparedData* d = &data;
    return [=](const Mesh& mesh) {
        Network net(arch, window, horizon, mesh, train_cfg.seed);
        return train(net, d->train, &d->test, train_cfg).test_mae;
    };
}

void configure_logging() {
    auto logger = spdlog::get("neuroevo");
    if (!logger) {
        logger = spdlog::stderr_color_mt("neuroevo");
        spdlog::set_default_logger(logger);
    }
    const char* env = std::getenv("NEUROEVO_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else {
        spdlog::set_level(spdlog::level::info);
        if (level != "info") spdlog::warn("NEUROEVO_LOG={} not recognized, using info", level);
    }
}

// ---- commands --------------------------------------------------------------

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out || !(out << text)) throw Error(ErrorCode::Io, "cannot write " + path.string());
}

void write_failures(const std::vector<FailedEvaluation>& failures, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << "attempt,reason\n";
    for (const auto& f : failures) {
        std::string reason = f.reason;
        std::replace(reason.begin(), reason.end(), ',', ';');
        std::replace(reason.begin(), reason.end(), '\n', ' ');
        out << f.iteration << ',' << reason << '\n';
    }
}

void write_evolution_outputs(const RunConfig& cfg, const PreparedData& data, const EvolutionResult& result) {
    const fs::path& dir = cfg.out_dir;
    write_evolution_log(result.log, dir / "evolution_log.csv");
    write_top_table(top_k(result.log, cfg.top_k), dir / "top_networks.csv");
    write_failures(result.failures, dir / "failures.csv");
    if (!result.has_best()) {
        spdlog::warn("no successful evaluation, no best mesh written");
        return;
    }
    const Mesh& best = result.best_mesh();
    write_file(dir / "best_mesh.neac", serialize_mesh({cfg.arch, cfg.window, cfg.horizon, best}));
    Network net(cfg.arch, cfg.window, cfg.horizon, best, cfg.train.seed);
    net.inputs = data.spec;
    const TrainReport report = train(net, data.train, &data.test, cfg.train);
    save_network(net, dir / "best_model.neac");
    spdlog::info("best mesh: fitness {:.6f}, {} m1 connections, {} weights; retrained test MAE {:.6f}",
                 result.population.best().fitness, best.m1_count(), count_weights(cfg.arch, cfg.window, best),
                 report.test_mae);
}

}  // namespace

SynthResult cmd_synth(std::uint64_t seed, std::size_t n_flights, std::size_t length_s, std::size_t n_channels,
                      const fs::path& out_dir) {
    const SynthCorpus corpus = synth_flights(seed, n_flights, length_s, n_channels);
    fs::create_directories(out_dir);
    SynthResult result;
    result.metadata = corpus.metadata;
    for (const auto& flight : corpus.flights) {
        const fs::path path = out_dir / (flight.id + ".csv");
        write_flight_csv(flight, path);
        result.files.push_back(path);
    }
    write_text(out_dir / "synth_metadata.txt", corpus.metadata.describe());
    return result;
}

ParameterRanking cmd_correlate(const fs::path& data_dir, const fs::path& out_csv, const std::string& target) {
    const auto flights = load_all_columns(data_dir, target);
    const auto ranking = rank_parameters(normalize_all(flights, compute_ranges(flights)));
    if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
    write_ranking_csv(ranking, out_csv);
    return ranking;
}

TrainReport cmd_train(const RunConfig& cfg) {
    const PreparedData data = prepare_data(cfg);
    fs::create_directories(cfg.out_dir);
    write_text(cfg.out_dir / "resolved_config.txt", cfg.to_text());
    Network net(cfg.arch, cfg.window, cfg.horizon, Mesh::full(), cfg.train.seed);
    net.inputs = data.spec;
    const TrainReport report = train(net, data.train, &data.test, cfg.train);
    save_network(net, cfg.out_dir / "model.neac");
    write_train_report(report, cfg.out_dir / "train_report.csv");
    spdlog::info("trained {} epochs: train mse {:.6g}, test mse {:.6g}, test mae {:.6g}", cfg.train.epochs,
                 report.final_train_mse, report.test_mse, report.test_mae);
    return report;
}

Role parse_role(const std::string& text) {
    if (text == "local") return Role::Local;
    if (text == "master") return Role::Master;
    if (text == "worker") return Role::Worker;
    throw Error(ErrorCode::InvalidArgument, "role must be master, worker or local");
}

int cmd_evolve(const RunConfig& cfg, Role role) {
    const PreparedData data = prepare_data(cfg);
    dist::MasterOptions options;
    options.digest = run_digest(cfg, data);
    options.timeout_floor_s = cfg.timeout_floor_s;
    options.timeout_multiplier = cfg.timeout_multiplier;
    options.drain_timeout_s = cfg.drain_timeout_s;
    const MeshEvaluator evaluator = training_evaluator(cfg, data);

    if (role == Role::Worker) {
        try {
            auto channel = dist::TcpWorkerChannel::connect(cfg.master_address, cfg.connect_attempts);
            return dist::worker_loop(*channel, evaluator, options.digest);
        } catch (const Error& e) {
            spdlog::error("worker: {}", e.what());
            return 2;
        }
    }

    fs::create_directories(cfg.out_dir);
    write_text(cfg.out_dir / "resolved_config.txt", cfg.to_text());
    EvolutionResult result;
    if (role == Role::Local) {
        result = dist::run_local(cfg.aco, cfg.arch, cfg.window, cfg.workers, evaluator, options).evolution;
    } else {
        AcoState state(cfg.aco, cfg.arch, cfg.window);
        dist::TcpMasterTransport transport(cfg.master_bind);
        dist::master_loop(state, transport, options);
        result.population = state.population();
        result.pheromones = state.pheromones();
        result.log = state.log();
        result.failures = state.failures();
    }
    write_evolution_outputs(cfg, data, result);
    return result.log.size() >= cfg.aco.n_iterations ? 0 : 1;
}

EvaluateResult cmd_evaluate(const fs::path& model, const fs::path& data_dir, const fs::path& out_dir) {
    const Network net = load_network(model);
    const InputSpec& spec = net.inputs;
    if (spec.channel_order.empty()) throw Error(ErrorCode::InvalidArgument, "model carries no input specification");
    const auto flights = normalize_all(load_flight_dir(data_dir, spec.channel_order, spec.target), spec.ranges);
    const WindowedDataset data = make_windows(flights, net.window(), net.horizon(), spec.channel_order);
    const auto predictions = predict(net, data);

    fs::create_directories(out_dir);
    EvaluateResult result;
    std::vector<double> all_targets;
    for (const auto& s : data.samples) all_targets.push_back(s.y);
    result.overall = {mse_cost(predictions, all_targets), mae_cost(predictions, all_targets)};

    for (std::size_t f = 0; f < data.flight_ids.size(); ++f) {
        std::vector<double> p, t;
        std::ofstream out(out_dir / ("predictions_" + data.flight_ids[f] + ".csv"));
        if (!out) throw Error(ErrorCode::Io, "cannot write predictions for " + data.flight_ids[f]);
        out << "time,actual,predicted\n";
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data.samples[i].flight != f) continue;
            out << fmt::format("{},{:.17g},{:.17g}\n", data.target_second(i), data.samples[i].y, predictions[i]);
            p.push_back(predictions[i]);
            t.push_back(data.samples[i].y);
        }
        result.per_flight.emplace_back(data.flight_ids[f], EvalResult{mse_cost(p, t), mae_cost(p, t)});
    }

    std::ofstream summary(out_dir / "evaluation.csv");
    if (!summary) throw Error(ErrorCode::Io, "cannot write evaluation.csv");
    summary << "flight,mse,mae\n";
    for (const auto& [id, r] : result.per_flight) summary << fmt::format("{},{:.17g},{:.17g}\n", id, r.mse, r.mae);
    summary << fmt::format("all,{:.17g},{:.17g}\n", result.overall.mse, result.overall.mae);
    return result;
}

ConnectionStats connection_stats(const std::vector<IterationLog>& rows) {
    ConnectionStats s;
    s.rows = rows.size();
    if (rows.empty()) return s;
    s.min_m1 = s.min_total = SIZE_MAX;
    for (const auto& r : rows) {
        s.mean_m1 += static_cast<double>(r.m1_count);
        s.mean_total += static_cast<double>(r.total_connections);
        s.min_m1 = std::min(s.min_m1, r.m1_count);
        s.max_m1 = std::max(s.max_m1, r.m1_count);
        s.min_total = std::min(s.min_total, r.total_connections);
        s.max_total = std::max(s.max_total, r.total_connections);
    }
    s.mean_m1 /= static_cast<double>(rows.size());
    s.mean_total /= static_cast<double>(rows.size());
    return s;
}

ReportResult cmd_report(const fs::path& log, std::size_t k, const fs::path& out_csv) {
    const auto rows = read_evolution_log(log);
    if (rows.empty()) throw Error(ErrorCode::Empty, log.string() + " has no rows");
    ReportResult result;
    result.top = top_k(rows, k);
    result.stats = connection_stats(result.top);
    if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
    write_top_table(result.top, out_csv);
    return result;
}

}  // namespace neuroevo
