#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cgf/geo.hpp"
#include "cgf/hurdat.hpp"

namespace cgf::data {

inline constexpr std::size_t kFeatureCount = 5;
inline constexpr std::size_t kDefaultWindow = 12;
inline constexpr std::size_t kDefaultPadLength = 100;
inline constexpr double kTestClamp = 1.5;

/// Column order of every feature matrix.
enum Feature : std::size_t { kWind = 0, kPressure, kDistance, kBearing, kGridId };

std::string_view feature_name(std::size_t feature);

/// One 6-hourly fix plus its motion towards the next fix.
struct StepFeatures {
    double wind = 0.0;      // knots
    double pressure = 0.0;  // mb
    double distance = 0.0;  // statute miles to the next fix
    double bearing = 0.0;   // degrees, [0, 360)
    std::int64_t grid_id = 0;

    std::array<double, kFeatureCount> values() const {
        return {wind, pressure, distance, bearing, static_cast<double>(grid_id)};
    }

    friend bool operator==(const StepFeatures&, const StepFeatures&) = default;
};

enum class StationaryPolicy {
    fail,           // UndefinedBearingError naming the storm and index
    carry_bearing,  // reuse the previous bearing (0 for the first step)
};

/// One row per fix except the last. Requires at least two points.
std::vector<StepFeatures> derive_steps(const hurdat::StormTrack& track, const geo::GridSpec& grid,
                                       StationaryPolicy policy = StationaryPolicy::fail,
                                       std::size_t* stationary_count = nullptr);

struct PaddedSequence {
    std::vector<StepFeatures> rows;  // length == padded length, zeros after valid_len
    std::size_t valid_len = 0;
};

PaddedSequence pad_track(std::span<const StepFeatures> steps, std::size_t target_len = kDefaultPadLength);

struct WindowSample {
    std::vector<StepFeatures> history;  // raw input rows, window length
    std::vector<double> inputs;         // normalized, row-major window x kFeatureCount
    double label = 0.0;                 // normalized grid id
    std::int64_t raw_label = 0;
    std::size_t storm = 0;              // index of the source storm
    std::size_t offset = 0;             // start row within the storm
};

/// Windows are taken only from real rows: one per start s with
/// s + window + 1 <= valid_len. Inputs are left unnormalized.
std::vector<WindowSample> make_windows(const PaddedSequence& seq, std::size_t window = kDefaultWindow);

struct FeatureRange {
    double min = 0.0;
    double max = 1.0;

    double to_unit(double v) const { return 2.0 * (v - min) / (max - min) - 1.0; }
    double from_unit(double u) const { return min + (u + 1.0) * 0.5 * (max - min); }

    friend bool operator==(const FeatureRange&, const FeatureRange&) = default;
};

/// Min-max map of every feature onto [-1, 1]. Wind, pressure, distance and
/// bearing ranges come from the training windows; the grid id feature and
/// the label share the full id range of the grid so every cell is
/// representable.
struct Normalizer {
    std::array<FeatureRange, kFeatureCount> features{};
    FeatureRange label{};

    static Normalizer fit(std::span<const WindowSample> train, const geo::GridSpec& grid);

    double transform(std::size_t feature, double value) const { return features[feature].to_unit(value); }
    double inverse(std::size_t feature, double unit) const { return features[feature].from_unit(unit); }
    double label_transform(std::int64_t grid_id) const { return label.to_unit(static_cast<double>(grid_id)); }
    double label_inverse(double unit) const { return label.from_unit(unit); }

    /// Normalized row-major inputs; values beyond +-kTestClamp are clamped
    /// and counted in `clamped`.
    std::vector<double> transform_rows(std::span<const StepFeatures> rows, std::size_t* clamped = nullptr) const;

    /// Fills sample.inputs and sample.label. Returns the number of clamped values.
    std::size_t apply(WindowSample& sample) const;

    friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

struct SplitDataset {
    std::vector<WindowSample> train;
    std::vector<WindowSample> test;
    std::vector<std::size_t> train_storms;
    std::vector<std::size_t> test_storms;
    std::uint64_t seed = 0;
};

/// Shuffles storms with `seed`, then assigns each to whichever side keeps
/// the train share of windows closest to `ratio`. Storms without windows are
/// ignored. Requires at least two storms with windows.
SplitDataset split_by_storm(std::vector<std::vector<WindowSample>> by_storm, double ratio, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Prepared dataset and its on-disk cache.

struct StormRecord {
    std::string id;
    std::string name;
    int year = 0;
    std::vector<geo::GeoPoint> positions;  // all filtered fixes
    std::vector<StepFeatures> steps;       // positions.size() - 1 rows
    bool test = false;

    friend bool operator==(const StormRecord&, const StormRecord&) = default;
};

struct PrepareOptions {
    double resolution = 1.0;
    std::size_t window = kDefaultWindow;
    std::size_t pad_length = kDefaultPadLength;
    double split_ratio = 0.85;
    std::uint64_t seed = 42;
};

struct PreparedDataset {
    geo::GridSpec grid;
    Normalizer normalizer;
    std::vector<StormRecord> storms;
    PrepareOptions options;
    hurdat::DatasetSummary summary;
    double max_step_miles = 0.0;     // largest observed 6-hour displacement
    std::size_t stationary_steps = 0;  // zero-displacement fixes given a carried bearing

    const StormRecord* find(std::string_view storm_id) const;
};

/// Fits the grid, derives features, windows every storm, splits by storm
/// and fits the normalizer on the training side.
PreparedDataset prepare_dataset(std::span<const hurdat::StormTrack> filtered, const PrepareOptions& options);

struct WindowSets {
    std::vector<WindowSample> train;
    std::vector<WindowSample> test;
    std::size_t clamped = 0;  // test values clamped to +-kTestClamp
};

/// Normalized windows for both sides of the stored split.
WindowSets window_sets(const PreparedDataset& dataset);

/// Binary cache ("CGF1": little-endian u32 counts, f64 matrices, storm-id
/// table, trailing CRC-32) plus a JSON sidecar next to it holding the grid,
/// normalizer, options and summary.
void write_dataset(const PreparedDataset& dataset, const std::filesystem::path& path);
PreparedDataset read_dataset(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& cache_path);

}  // namespace cgf::data
