#include "neuroevo/flightdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "neuroevo/error.hpp"

namespace neuroevo {

namespace fs = std::filesystem;

const Channel* FlightSeries::find(std::string_view name) const {
    for (const auto& ch : channels) {
        if (ch.name == name) return &ch;
    }
    return nullptr;
}

const Channel& FlightSeries::channel(std::string_view name) const {
    const Channel* ch = find(name);
    if (ch == nullptr) {
        throw Error(ErrorCode::MissingColumn, fmt::format("{} (flight {})", name, id));
    }
    return *ch;
}

std::vector<std::string> FlightSeries::names() const {
    std::vector<std::string> out;
    out.reserve(channels.size());
    for (const auto& ch : channels) out.push_back(ch.name);
    return out;
}

// ---- CSV -------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            out.push_back(trim(line.substr(pos)));
            break;
        }
        out.push_back(trim(line.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

bool parse_double(std::string_view cell, double& out) {
    if (cell.empty()) return false;
    if (cell.front() == '+') cell.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
    return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(out);
}

std::ifstream open_or_throw(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return in;
}

}  // namespace

std::vector<std::string> read_csv_header(const fs::path& path) {
    auto in = open_or_throw(path);
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) {
        throw Error(ErrorCode::EmptyFile, path.string());
    }
    std::vector<std::string> names;
    for (auto cell : split(line)) names.emplace_back(cell);
    return names;
}

FlightSeries load_flight_csv(const fs::path& path, std::span<const std::string> schema,
                             std::string target) {
    auto in = open_or_throw(path);
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) {
        throw Error(ErrorCode::EmptyFile, path.string());
    }
    const auto header = split(line);

    std::vector<std::size_t> columns;
    columns.reserve(schema.size());
    for (const auto& name : schema) {
        auto it = std::find(header.begin(), header.end(), std::string_view(name));
        if (it == header.end()) throw Error(ErrorCode::MissingColumn, name);
        columns.push_back(static_cast<std::size_t>(it - header.begin()));
    }

    FlightSeries flight;
    flight.id = path.stem().string();
    flight.target = std::move(target);
    flight.channels.resize(schema.size());
    for (std::size_t c = 0; c < schema.size(); ++c) flight.channels[c].name = schema[c];

    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) {
            throw Error(ErrorCode::ParseError,
                        fmt::format("row {}: expected {} fields, got {}", row, header.size(), cells.size()));
        }
        for (std::size_t c = 0; c < columns.size(); ++c) {
            double v = 0.0;
            if (!parse_double(cells[columns[c]], v)) {
                throw Error(ErrorCode::ParseError,
                            fmt::format("row {}, column {}: '{}'", row, schema[c], cells[columns[c]]));
            }
            flight.channels[c].values.push_back(v);
        }
    }
    if (row == 1) throw Error(ErrorCode::EmptyFile, path.string() + " has no data rows");
    flight.length_s = flight.channels.empty() ? 0 : flight.channels.front().values.size();
    return flight;
}

void write_flight_csv(const FlightSeries& flight, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    for (std::size_t c = 0; c < flight.channels.size(); ++c) {
        out << (c ? "," : "") << flight.channels[c].name;
    }
    out << '\n';
    for (std::size_t t = 0; t < flight.length_s; ++t) {
        std::string row;
        for (std::size_t c = 0; c < flight.channels.size(); ++c) {
            if (c) row += ',';
            row += fmt::format("{:.17g}", flight.channels[c].values[t]);
        }
        out << row << '\n';
    }
}

std::vector<fs::path> list_flight_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<FlightSeries> load_flight_dir(const fs::path& dir, std::span<const std::string> schema,
                                          std::string target) {
    std::vector<FlightSeries> flights;
    for (const auto& file : list_flight_files(dir)) flights.push_back(load_flight_csv(file, schema, target));
    if (flights.empty()) throw Error(ErrorCode::NoFlights, "no .csv files in " + dir.string());
    return flights;
}

// ---- normalization ---------------------------------------------------------

NormalizationRanges compute_ranges(std::span<const FlightSeries> flights) {
    if (flights.empty()) throw Error(ErrorCode::NoFlights, "cannot compute ranges");
    NormalizationRanges ranges;
    for (const auto& flight : flights) {
        for (const auto& ch : flight.channels) {
            if (ch.values.empty()) continue;
            auto [lo, hi] = std::minmax_element(ch.values.begin(), ch.values.end());
            auto [it, inserted] = ranges.try_emplace(ch.name, Range{*lo, *hi});
            if (!inserted) {
                it->second.min = std::min(it->second.min, *lo);
                it->second.max = std::max(it->second.max, *hi);
            }
        }
    }
    return ranges;
}

FlightSeries normalize(const FlightSeries& series, const NormalizationRanges& ranges) {
    FlightSeries out = series;
    for (auto& ch : out.channels) {
        auto it = ranges.find(ch.name);
        if (it == ranges.end()) throw Error(ErrorCode::MissingColumn, "no range for " + ch.name);
        const Range r = it->second;
        if (!(r.max > r.min)) throw Error(ErrorCode::DegenerateRange, ch.name);
        const double span = r.max - r.min;
        for (double& v : ch.values) v = std::clamp((v - r.min) / span, 0.0, 1.0);
    }
    return out;
}

std::vector<FlightSeries> normalize_all(std::span<const FlightSeries> flights,
                                        const NormalizationRanges& ranges) {
    std::vector<FlightSeries> out;
    out.reserve(flights.size());
    for (const auto& f : flights) out.push_back(normalize(f, ranges));
    return out;
}

// ---- ranking ---------------------------------------------------------------

double cross_correlate(std::span<const double> x, std::span<const double> vib) {
    if (x.size() != vib.size()) {
        throw Error(ErrorCode::LengthMismatch, fmt::format("{} vs {}", x.size(), vib.size()));
    }
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
    if (n == 0) return 0.0;
    double total = 0.0;
    // r[k] = sum_a x[a] * vib[a + k], for k in (-n, n).
    for (std::ptrdiff_t k = -(n - 1); k <= n - 1; ++k) {
        const std::ptrdiff_t a0 = std::max<std::ptrdiff_t>(0, -k);
        const std::ptrdiff_t a1 = std::min<std::ptrdiff_t>(n, n - k);
        double r = 0.0;
        for (std::ptrdiff_t a = a0; a < a1; ++a) r += x[a] * vib[a + k];
        total += std::abs(r);
    }
    return total / static_cast<double>(n);
}

ParameterRanking rank_parameters(std::span<const FlightSeries> flights) {
    if (flights.empty()) throw Error(ErrorCode::NoFlights, "rank_parameters");
    std::map<std::string, double> sums;
    for (const auto& flight : flights) {
        const Channel& vib = flight.channel(flight.target);
        for (const auto& ch : flight.channels) {
            if (ch.name == flight.target) continue;
            sums[ch.name] += cross_correlate(ch.values, vib.values);
        }
    }
    ParameterRanking ranking;
    for (const auto& [name, sum] : sums) {
        ranking.entries.push_back({name, sum / static_cast<double>(flights.size())});
    }
    std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                     [](const RankEntry& a, const RankEntry& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return a.name < b.name;
                     });
    return ranking;
}

void write_ranking_csv(const ParameterRanking& ranking, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << "name,score\n";
    for (const auto& e : ranking.entries) out << e.name << ',' << fmt::format("{:.17g}", e.score) << '\n';
}

// ---- windows ---------------------------------------------------------------

WindowedDataset make_windows(std::span<const FlightSeries> flights, std::size_t window,
                             std::size_t horizon, std::span<const std::string> channel_order) {
    if (window == 0) throw Error(ErrorCode::InvalidArgument, "window length must be >= 1");
    if (channel_order.empty() || channel_order.size() > kMaxParameters) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("channel order must name 1..{} channels, got {}", kMaxParameters,
                                channel_order.size()));
    }
    WindowedDataset data;
    data.window = window;
    data.horizon = horizon;
    data.channel_order.assign(channel_order.begin(), channel_order.end());

    for (const auto& flight : flights) {
        if (std::find(channel_order.begin(), channel_order.end(), flight.target) == channel_order.end()) {
            throw Error(ErrorCode::MissingColumn,
                        fmt::format("target {} must be one of the input channels", flight.target));
        }
        if (window_count(flight.length_s, window, horizon) == 0) {
            throw Error(ErrorCode::FlightTooShort,
                        fmt::format("{}: {} s < T + H = {}", flight.id, flight.length_s, window + horizon));
        }
        std::vector<const Channel*> cols;
        for (const auto& name : channel_order) cols.push_back(&flight.channel(name));
        const Channel& vib = flight.channel(flight.target);

        const std::size_t flight_index = data.flight_ids.size();
        data.flight_ids.push_back(flight.id);
        const std::size_t count = window_count(flight.length_s, window, horizon);
        for (std::size_t s = 0; s < count; ++s) {
            Sample sample;
            sample.flight = flight_index;
            sample.start = s;
            sample.x.resize(window);
            for (std::size_t t = 0; t < window; ++t) {
                auto& row = sample.x[t];
                row.fill(0.0);
                for (std::size_t c = 0; c < cols.size(); ++c) row[c] = cols[c]->values[s + t];
                row[kBiasSlot] = 1.0;
            }
            sample.y = vib.values[s + window - 1 + horizon];
            data.samples.push_back(std::move(sample));
        }
    }
    return data;
}

// ---- synthetic corpus ------------------------------------------------------

namespace {

constexpr const char* kSynthNames[] = {"ALT", "AOA", "BPRS", "TIT", "M",   "N1",   "N2",
                                       "EOP", "EOQ", "EOT",  "Roll", "TAT", "WDir", "WSpd"};

std::string synth_name(std::size_t i) {
    if (i < std::size(kSynthNames)) return kSynthNames[i];
    return fmt::format("P{:02}", i + 1);
}

// Target lag (seconds) of driver d.
std::size_t driver_lag(std::size_t d) { return 5 + 4 * (d % 4); }

double driver_gain(std::size_t d) { return (d % 2 == 0 ? 1.0 : -1.0) * (3.0 - 0.4 * static_cast<double>(d % 5)); }

constexpr double kInteraction = 4.0;
constexpr double kNoise = 0.01;

}  // namespace

std::string SynthMetadata::describe() const {
    std::string s;
    s += fmt::format("seed={}\n", seed);
    s += "parameters=";
    for (std::size_t i = 0; i < parameters.size(); ++i) s += (i ? "," : "") + parameters[i];
    s += "\ndrivers=";
    for (std::size_t i = 0; i < drivers.size(); ++i) s += (i ? "," : "") + drivers[i];
    s += "\ndecoys=";
    for (std::size_t i = 0; i < decoys.size(); ++i) s += (i ? "," : "") + decoys[i];
    s += "\nformula=" + formula + "\n";
    return s;
}

SynthCorpus synth_flights(std::uint64_t seed, std::size_t n_flights, std::size_t length_s,
                          std::size_t n_channels) {
    if (n_channels < 2) throw Error(ErrorCode::InvalidArgument, "n_channels must be >= 2");
    if (length_s < 40) throw Error(ErrorCode::InvalidArgument, "length_s must be >= 40");

    const std::size_t n_params = n_channels - 1;
    const std::size_t n_drivers = (n_params + 1) / 2;

    SynthCorpus corpus;
    auto& meta = corpus.metadata;
    meta.seed = seed;
    for (std::size_t i = 0; i < n_params; ++i) {
        meta.parameters.push_back(synth_name(i));
        (i < n_drivers ? meta.drivers : meta.decoys).push_back(synth_name(i));
    }
    std::string mix;
    for (std::size_t d = 0; d < n_drivers; ++d) {
        mix += fmt::format("{}{:+.1f}*(s_{}(t-{})-0.5)", d ? " " : "", driver_gain(d), meta.drivers[d],
                           driver_lag(d));
    }
    if (n_drivers >= 2) {
        mix += fmt::format(" {:+.1f}*(s_{}(t-{})-0.5)*(s_{}(t-{})-0.5)", kInteraction, meta.drivers[0],
                           driver_lag(0), meta.drivers[1], driver_lag(1));
    }
    meta.formula = fmt::format(
        "s_c(t) = 0.5 + sum_{{m=1..3}} A_cm*sin(2*pi*t/P_cm + phi_cm), A ~ U(0.08,0.16), "
        "P ~ U(40,300) s, phi ~ U(0,2pi) drawn per flight and channel; "
        "driver channel = s_c(t) + N(0,{0}); decoy channel = s_c(t)^3 + N(0,{0}); "
        "{1}(t) = sigmoid({2}) + N(0,{0}), lagged samples clamped to t=0",
        kNoise, kDefaultTarget, mix);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> amp(0.08, 0.16);
    std::uniform_real_distribution<double> period(40.0, 300.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> noise(0.0, kNoise);

    for (std::size_t f = 0; f < n_flights; ++f) {
        FlightSeries flight;
        flight.id = fmt::format("flight_{:03}", f);
        flight.length_s = length_s;

        // Clean smooth base signals, then the observed channels.
        std::vector<std::vector<double>> base(n_params, std::vector<double>(length_s));
        for (std::size_t c = 0; c < n_params; ++c) {
            double a[3], p[3], ph[3];
            for (int m = 0; m < 3; ++m) {
                a[m] = amp(rng);
                p[m] = period(rng);
                ph[m] = phase(rng);
            }
            for (std::size_t t = 0; t < length_s; ++t) {
                double v = 0.5;
                for (int m = 0; m < 3; ++m) {
                    v += a[m] * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / p[m] + ph[m]);
                }
                base[c][t] = v;
            }
        }
        for (std::size_t c = 0; c < n_params; ++c) {
            Channel ch{synth_name(c), std::vector<double>(length_s)};
            const bool driver = c < n_drivers;
            for (std::size_t t = 0; t < length_s; ++t) {
                const double b = base[c][t];
                ch.values[t] = (driver ? b : b * b * b) + noise(rng);
            }
            flight.channels.push_back(std::move(ch));
        }

        Channel vib{kDefaultTarget, std::vector<double>(length_s)};
        auto lagged = [&](std::size_t d, std::size_t t) {
            const std::size_t lag = driver_lag(d);
            return base[d][t >= lag ? t - lag : 0] - 0.5;
        };
        for (std::size_t t = 0; t < length_s; ++t) {
            double z = 0.0;
            for (std::size_t d = 0; d < n_drivers; ++d) z += driver_gain(d) * lagged(d, t);
            if (n_drivers >= 2) z += kInteraction * lagged(0, t) * lagged(1, t);
            vib.values[t] = 1.0 / (1.0 + std::exp(-z)) + noise(rng);
        }
        flight.channels.push_back(std::move(vib));
        corpus.flights.push_back(std::move(flight));
    }
    return corpus;
}

}  // namespace neuroevo
