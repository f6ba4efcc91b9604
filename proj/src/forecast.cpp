#include "cgf/forecast.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "cgf/binary_io.hpp"
#include "cgf/error.hpp"

namespace cgf::forecast {
namespace {

using data::StepFeatures;

// Cell holding `p` after pulling it inside the grid bounds.
std::int64_t clamped_cell(geo::GeoPoint p, const geo::GridSpec& grid) {
    const double eps = grid.resolution * 1e-9;
    p.lat = std::clamp(p.lat, grid.lat_min, grid.lat_max - eps);
    p.lon = std::clamp(p.lon, grid.lon_min, grid.lon_max - eps);
    return geo::grid_id(p, grid);
}

StepFeatures next_row(const StepFeatures& last, std::int64_t next_id, const geo::GridSpec& grid, bool& carried) {
    const auto from = geo::grid_center(last.grid_id, grid);
    const auto to = geo::grid_center(next_id, grid);
    StepFeatures row = last;
    row.grid_id = next_id;
    carried = from == to;
    if (carried) {
        row.distance = 0.0;
    } else {
        const auto m = geo::motion(from, to);
        row.distance = m.distance_miles;
        row.bearing = m.bearing_deg;
    }
    return row;
}

std::string number(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

nlohmann::json position(const geo::GeoPoint& p) { return nlohmann::json::array({p.lon, p.lat}); }

void require_window(const Predictor& predictor, std::size_t available) {
    const std::size_t window = predictor.model.config().seq_len;
    if (available < window) {
        throw InputError("history has " + std::to_string(available) + " steps, need " + std::to_string(window));
    }
}

// Prediction from exactly the last `window` rows. Clamped values are thrown
// as RangeError unless `clamped` is given, in which case they are counted.
ForecastStep predict_rows(const Predictor& predictor, std::span<const StepFeatures> rows, std::size_t* clamped) {
    std::size_t count = 0;
    const auto inputs = predictor.normalizer.transform_rows(rows, &count);
    if (clamped != nullptr) {
        *clamped += count;
    } else if (count > 0) {
        throw RangeError(std::to_string(count) + " history feature(s) fall outside the normalizer's clamp bounds");
    }
    const double unit = predictor.model.forward(inputs);
    const auto cells = predictor.grid.cell_count();
    const auto raw = std::llround(predictor.normalizer.label_inverse(unit));
    const auto id = std::clamp<std::int64_t>(raw, 0, cells - 1);
    return ForecastStep{1, id, geo::grid_center(id, predictor.grid), false};
}

}  // namespace

Predictor Predictor::from_checkpoint(const train::Checkpoint& ck) {
    return Predictor{model::Model(ck.model_config, ck.params), ck.normalizer, ck.grid};
}

ForecastStep predict_next(const Predictor& predictor, std::span<const StepFeatures> history) {
    require_window(predictor, history.size());
    return predict_rows(predictor, history.last(predictor.model.config().seq_len), nullptr);
}

Trajectory rollout(const Predictor& predictor, std::span<const StepFeatures> history, std::size_t n_steps) {
    if (n_steps < 1) throw InputError("rollout needs at least one step");
    require_window(predictor, history.size());
    const std::size_t window = predictor.model.config().seq_len;
    Trajectory traj;
    traj.method = "model";
    traj.intensity_persisted = true;
    traj.origin = geo::grid_center(history.back().grid_id, predictor.grid);

    std::vector<StepFeatures> rows(history.end() - static_cast<std::ptrdiff_t>(window), history.end());
    for (std::size_t k = 1; k <= n_steps; ++k) {
        auto step = k == 1 ? predict_rows(predictor, rows, nullptr)
                           : predict_rows(predictor, rows, &traj.clamped_features);
        step.step_index = k;
        bool carried = false;
        auto row = next_row(rows.back(), step.grid_id, predictor.grid, carried);
        step.bearing_carried = carried;
        if (carried) ++traj.degenerate_steps;
        traj.forecast.push_back(step);
        rows.erase(rows.begin());
        rows.push_back(row);
    }
    return traj;
}

Trajectory persistence_baseline(const geo::GridSpec& grid, std::span<const StepFeatures> history,
                                std::size_t n_steps) {
    if (history.empty()) throw InputError("persistence baseline needs at least one step");
    const auto& last = history.back();
    Trajectory traj;
    traj.method = "persistence";
    traj.origin = geo::grid_center(last.grid_id, grid);
    geo::GeoPoint at = traj.origin;
    for (std::size_t k = 1; k <= n_steps; ++k) {
        if (last.distance > 0.0) at = geo::destination(at, last.bearing, last.distance);
        const auto id = clamped_cell(at, grid);
        traj.forecast.push_back(ForecastStep{k, id, geo::grid_center(id, grid), last.distance <= 0.0});
    }
    if (last.distance <= 0.0) traj.degenerate_steps = n_steps;
    return traj;
}

double persistence_accuracy(const geo::GridSpec& grid, std::span<const data::WindowSample> samples) {
    if (samples.empty()) throw InputError("cannot score an empty sample set");
    std::size_t hits = 0;
    for (const auto& s : samples) {
        if (persistence_baseline(grid, s.history, 1).forecast.front().grid_id == s.raw_label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double displacement_cap(double max_step_miles, const geo::GridSpec& grid) {
    const double lat = std::clamp(0.0, grid.lat_min, grid.lat_max - grid.resolution);
    const double diagonal =
        geo::great_circle_distance({lat, grid.lon_min}, {lat + grid.resolution, grid.lon_min + grid.resolution});
    return 1.5 * max_step_miles + diagonal;
}

ExportFormat parse_format(std::string_view name) {
    if (name == "geojson") return ExportFormat::geojson;
    if (name == "csv") return ExportFormat::csv;
    throw InputError("unknown format '" + std::string(name) + "' (expected geojson or csv)");
}

std::string to_geojson(const Trajectory& t) {
    using nlohmann::json;
    json features = json::array();
    const json base = {{"storm_id", t.storm_id}, {"method", t.method}};

    if (!t.observed.empty()) {
        json coords = json::array();
        for (const auto& p : t.observed) coords.push_back(position(p));
        json props = base;
        props["kind"] = "observed";
        json geometry = t.observed.size() == 1 ? json{{"type", "Point"}, {"coordinates", coords[0]}}
                                               : json{{"type", "LineString"}, {"coordinates", coords}};
        features.push_back({{"type", "Feature"}, {"geometry", geometry}, {"properties", props}});
    }

    if (!t.forecast.empty()) {
        json coords = json::array({position(t.origin)});
        for (const auto& s : t.forecast) coords.push_back(position(s.center));
        json props = base;
        props["kind"] = "forecast";
        props["intensity_persisted"] = t.intensity_persisted;
        props["degenerate_steps"] = t.degenerate_steps;
        props["clamped_features"] = t.clamped_features;
        features.push_back({{"type", "Feature"},
                            {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
                            {"properties", props}});
        for (const auto& s : t.forecast) {
            json p = {{"step_index", s.step_index}, {"grid_id", s.grid_id}};
            if (s.bearing_carried) p["bearing_carried"] = true;
            features.push_back({{"type", "Feature"},
                                {"geometry", {{"type", "Point"}, {"coordinates", position(s.center)}}},
                                {"properties", p}});
        }
    }
    return json{{"type", "FeatureCollection"}, {"features", features}}.dump(2) + "\n";
}

std::string to_csv(const Trajectory& t) {
    std::string out = "kind,step,lat,lon,grid_id\n";
    for (std::size_t i = 0; i < t.observed.size(); ++i) {
        out += "observed," + std::to_string(i) + "," + number(t.observed[i].lat) + "," + number(t.observed[i].lon) +
               ",\n";
    }
    for (const auto& s : t.forecast) {
        out += "forecast," + std::to_string(s.step_index) + "," + number(s.center.lat) + "," + number(s.center.lon) +
               "," + std::to_string(s.grid_id) + "\n";
    }
    return out;
}

void export_trajectory(const Trajectory& t, ExportFormat format, const std::filesystem::path& path) {
    io::write_text_file(path.string(), format == ExportFormat::geojson ? to_geojson(t) : to_csv(t));
}

}  // namespace cgf::forecast
