#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cgf/dataset.hpp"
#include "cgf/geo.hpp"
#include "cgf/model.hpp"
#include "cgf/trainer.hpp"

namespace cgf::forecast {

/// Everything needed to run the model on raw step features.
struct Predictor {
    model::Model model;
    data::Normalizer normalizer;
    geo::GridSpec grid;

    static Predictor from_checkpoint(const train::Checkpoint& checkpoint);
};

struct ForecastStep {
    std::size_t step_index = 0;  // 6-hour steps ahead, from 1
    std::int64_t grid_id = 0;
    geo::GeoPoint center;
    bool bearing_carried = false;  // predicted cell repeated the previous one

    friend bool operator==(const ForecastStep&, const ForecastStep&) = default;
};

struct Trajectory {
    std::string storm_id;
    std::string method;  // "model" or "persistence"
    std::vector<geo::GeoPoint> observed;
    geo::GeoPoint origin;  // center of the last history cell
    std::vector<ForecastStep> forecast;
    bool intensity_persisted = false;  // wind and pressure held at their last values
    std::size_t degenerate_steps = 0;
    std::size_t clamped_features = 0;  // synthesized values pulled back to the clamp bounds

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Next cell from the last `window` rows of `history`. Throws InputError if
/// the history is too short and RangeError if a feature normalizes outside
/// the clamp bounds.
ForecastStep predict_next(const Predictor& predictor, std::span<const data::StepFeatures> history);

/// Autoregressive forecast. Each predicted cell becomes a synthetic step
/// whose distance and bearing run from the previous cell center to the
/// predicted center; wind and pressure repeat the last observed row. The
/// observed history must normalize within the clamp bounds (RangeError);
/// synthesized rows are clamped and counted instead.
Trajectory rollout(const Predictor& predictor, std::span<const data::StepFeatures> history, std::size_t n_steps);

/// Repeats the last row's displacement from the center of its cell.
Trajectory persistence_baseline(const geo::GridSpec& grid, std::span<const data::StepFeatures> history,
                                std::size_t n_steps);

/// One-step persistence accuracy over a window set.
double persistence_accuracy(const geo::GridSpec& grid, std::span<const data::WindowSample> samples);

/// Largest 6-hour move a forecast may make: 1.5x the largest observed move
/// plus one cell diagonal for quantization.
double displacement_cap(double max_step_miles, const geo::GridSpec& grid);

enum class ExportFormat { geojson, csv };

ExportFormat parse_format(std::string_view name);

std::string to_geojson(const Trajectory& trajectory);
std::string to_csv(const Trajectory& trajectory);

void export_trajectory(const Trajectory& trajectory, ExportFormat format, const std::filesystem::path& path);

}  // namespace cgf::forecast
