#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace neuroevo {

/// Input width of every cell: 15 parameter slots plus the constant bias.
inline constexpr std::size_t kWidth = 16;
inline constexpr std::size_t kBiasSlot = kWidth - 1;
inline constexpr std::size_t kMaxParameters = kWidth - 1;

inline constexpr const char* kDefaultTarget = "Vib";

struct Channel {
    std::string name;
    std::vector<double> values;
};

/// One flight: per-second samples of several named channels, all the same
/// length. `target` names the vibration channel that is predicted.
struct FlightSeries {
    std::string id;
    std::vector<Channel> channels;
    std::size_t length_s = 0;
    std::string target = kDefaultTarget;

    const Channel* find(std::string_view name) const;
    const Channel& channel(std::string_view name) const;  // throws MissingColumn
    std::vector<std::string> names() const;
};

struct Range {
    double min = 0.0;
    double max = 1.0;
};

using NormalizationRanges = std::map<std::string, Range>;

// ---- CSV ingestion ---------------------------------------------------------

/// Column names of a flight CSV header, in file order.
std::vector<std::string> read_csv_header(const std::filesystem::path& path);

/// Loads `path`, keeping only the columns in `schema` (in schema order). The
/// flight id is the file stem.
FlightSeries load_flight_csv(const std::filesystem::path& path,
                             std::span<const std::string> schema,
                             std::string target = kDefaultTarget);

/// Writes with 17 significant digits so a load returns the same doubles.
void write_flight_csv(const FlightSeries& flight, const std::filesystem::path& path);

/// All `*.csv` files of a directory, sorted by file name.
std::vector<std::filesystem::path> list_flight_files(const std::filesystem::path& dir);

std::vector<FlightSeries> load_flight_dir(const std::filesystem::path& dir,
                                          std::span<const std::string> schema,
                                          std::string target = kDefaultTarget);

// ---- normalization ---------------------------------------------------------

/// Per-channel min/max over the given (training) flights.
NormalizationRanges compute_ranges(std::span<const FlightSeries> flights);

/// (v - min) / (max - min), clamped to [0,1]. Channels without a range are
/// rejected with MissingColumn; max == min is DegenerateRange.
FlightSeries normalize(const FlightSeries& series, const NormalizationRanges& ranges);

std::vector<FlightSeries> normalize_all(std::span<const FlightSeries> flights,
                                        const NormalizationRanges& ranges);

// ---- parameter ranking -----------------------------------------------------

/// Sum over every overlapping lag of |sum_a x[a] * vib[a + k]|, divided by the
/// signal length.
double cross_correlate(std::span<const double> x, std::span<const double> vib);

struct RankEntry {
    std::string name;
    double score = 0.0;
};

/// Sorted by score descending, ties by name ascending.
struct ParameterRanking {
    std::vector<RankEntry> entries;
};

/// Scores every non-target channel by its mean cross-correlation with the
/// target across flights.
ParameterRanking rank_parameters(std::span<const FlightSeries> flights);

void write_ranking_csv(const ParameterRanking& ranking, const std::filesystem::path& path);

// ---- windowing -------------------------------------------------------------

/// One training example: T input rows of kWidth values (bias in the last
/// slot) and the target value H seconds after the last row.
struct Sample {
    std::vector<std::array<double, kWidth>> x;
    double y = 0.0;
    std::size_t flight = 0;  // index into WindowedDataset::flight_ids
    std::size_t start = 0;   // first second of the window
};

struct WindowedDataset {
    std::size_t window = 0;   // T
    std::size_t horizon = 0;  // H
    std::vector<std::string> channel_order;
    std::vector<std::string> flight_ids;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    /// Second of the target value of sample `i` within its flight.
    std::size_t target_second(std::size_t i) const {
        return samples[i].start + window - 1 + horizon;
    }
};

/// Number of windows a flight of `length` seconds yields.
constexpr std::size_t window_count(std::size_t length, std::size_t window, std::size_t horizon) {
    return length + 1 > window + horizon ? length + 1 - window - horizon : 0;
}

/// Slides a T-second window over every flight. `channel_order` fills input
/// slots 0..n-1 (n <= 15); unused slots stay 0 and the last slot is 1.
WindowedDataset make_windows(std::span<const FlightSeries> flights, std::size_t window,
                             std::size_t horizon, std::span<const std::string> channel_order);

// ---- synthetic corpus ------------------------------------------------------

struct SynthMetadata {
    std::uint64_t seed = 0;
    std::vector<std::string> parameters;  // non-target channel names
    std::vector<std::string> drivers;     // channels that feed the target
    std::vector<std::string> decoys;      // channels that do not
    std::string formula;

    std::string describe() const;
};

struct SynthCorpus {
    std::vector<FlightSeries> flights;
    SynthMetadata metadata;
};

/// Deterministic synthetic flights: `n_channels - 1` smooth parameter channels
/// plus a target built as a lagged nonlinear mixture of a known driver subset.
SynthCorpus synth_flights(std::uint64_t seed, std::size_t n_flights, std::size_t length_s,
                          std::size_t n_channels);

}  // namespace neuroevo
