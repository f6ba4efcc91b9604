#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "cgf/error.hpp"
#include "cgf/forecast.hpp"
#include "synthetic_hurdat.hpp"

using namespace cgf;
using namespace cgf::forecast;

namespace {

struct Fixture {
    data::PreparedDataset dataset;
    Predictor predictor;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        cgf::testing::SyntheticOptions opts;
        opts.storms = 80;
        const auto tracks = hurdat::filter_tracks(cgf::testing::synthetic_tracks(opts), 1944, 2022);
        auto dataset = data::prepare_dataset(tracks, {});
        model::ModelConfig cfg;
        cfg.d_model = 8;
        cfg.n_heads = 2;
        cfg.ffn_hidden = 16;
        Predictor p{model::Model(cfg), dataset.normalizer, dataset.grid};
        return Fixture{std::move(dataset), std::move(p)};
    }();
    return f;
}

std::vector<const data::StormRecord*> long_storms(std::size_t min_steps) {
    std::vector<const data::StormRecord*> out;
    for (const auto& s : fixture().dataset.storms) {
        if (s.steps.size() >= min_steps) out.push_back(&s);
    }
    return out;
}

}  // namespace

TEST(PredictNext, InRangeAndDeterministic) {
    const auto& f = fixture();
    for (const auto* s : long_storms(12)) {
        const std::span history(s->steps);
        const auto a = predict_next(f.predictor, history.first(12));
        EXPECT_GE(a.grid_id, 0);
        EXPECT_LT(a.grid_id, f.dataset.grid.cell_count());
        EXPECT_EQ(a, predict_next(f.predictor, history.first(12)));
        EXPECT_TRUE(f.dataset.grid.contains(a.center));
    }
}

TEST(PredictNext, RejectsShortOrOutOfRangeHistory) {
    const auto& f = fixture();
    const auto* s = long_storms(12).front();
    EXPECT_THROW(predict_next(f.predictor, std::span(s->steps).first(11)), InputError);

    std::vector<data::StepFeatures> rows(s->steps.begin(), s->steps.begin() + 12);
    rows[5].wind = 10000.0;
    EXPECT_THROW(predict_next(f.predictor, rows), RangeError);
}

TEST(Rollout, OneStepMatchesPredictNext) {
    const auto& f = fixture();
    const auto* s = long_storms(12).front();
    const std::span history(s->steps);
    const auto traj = rollout(f.predictor, history.first(12), 1);
    ASSERT_EQ(traj.forecast.size(), 1u);
    EXPECT_EQ(traj.forecast[0].grid_id, predict_next(f.predictor, history.first(12)).grid_id);
    EXPECT_EQ(traj.origin, geo::grid_center(history[11].grid_id, f.dataset.grid));
    EXPECT_THROW(rollout(f.predictor, history.first(12), 0), InputError);
}

TEST(Rollout, LengthDeterminismAndBounds) {
    const auto& f = fixture();
    for (const auto* s : long_storms(20)) {
        const auto history = std::span(s->steps).first(14);
        const auto a = rollout(f.predictor, history, 8);
        ASSERT_EQ(a.forecast.size(), 8u);
        EXPECT_EQ(a, rollout(f.predictor, history, 8));
        EXPECT_TRUE(a.intensity_persisted);
        std::size_t carried = 0;
        for (std::size_t k = 0; k < 8; ++k) {
            EXPECT_EQ(a.forecast[k].step_index, k + 1);
            EXPECT_TRUE(f.dataset.grid.contains(a.forecast[k].center));
            if (a.forecast[k].bearing_carried) ++carried;
        }
        EXPECT_EQ(carried, a.degenerate_steps);
    }
}

TEST(Persistence, StationaryLastStepRepeatsTheCell) {
    const auto& f = fixture();
    auto rows = long_storms(12).front()->steps;
    rows.back().distance = 0.0;
    const auto t = persistence_baseline(f.dataset.grid, rows, 4);
    for (const auto& s : t.forecast) {
        EXPECT_EQ(s.grid_id, rows.back().grid_id);
        EXPECT_TRUE(s.bearing_carried);
    }
    EXPECT_EQ(t.degenerate_steps, 4u);
}

TEST(Persistence, ConstantVelocityAlongTheEquatorIsCollinear) {
    const geo::GridSpec grid{-60.0, 0.0, -5.0, 5.0, 1.0};
    data::StepFeatures last;
    last.grid_id = geo::grid_id({0.5, -50.5}, grid);
    last.bearing = 90.0;
    last.distance = geo::great_circle_distance({0.5, 0.0}, {0.5, 1.0});
    const std::vector<data::StepFeatures> history{last};
    const auto t = persistence_baseline(grid, history, 5);
    for (std::size_t k = 0; k < 5; ++k) {
        const auto expected = geo::grid_id({0.5, -50.5 + static_cast<double>(k + 1)}, grid);
        EXPECT_EQ(t.forecast[k].grid_id, expected) << k;
        EXPECT_DOUBLE_EQ(t.forecast[k].center.lat, 0.5);
    }
    EXPECT_EQ(t.degenerate_steps, 0u);
}

TEST(Persistence, DisplacementCapCoversTheWorstQuantization) {
    const geo::GridSpec grid{-60.0, 0.0, 0.0, 30.0, 1.0};
    const double diag = geo::great_circle_distance({0.0, -60.0}, {1.0, -59.0});
    EXPECT_NEAR(displacement_cap(100.0, grid), 150.0 + diag, 1e-9);
}

TEST(Export, ParseFormat) {
    EXPECT_EQ(parse_format("geojson"), ExportFormat::geojson);
    EXPECT_EQ(parse_format("csv"), ExportFormat::csv);
    EXPECT_THROW(parse_format("kml"), InputError);
}

namespace {

Trajectory sample_trajectory() {
    const auto& f = fixture();
    const auto* s = long_storms(20).front();
    auto t = rollout(f.predictor, std::span(s->steps).first(12), 4);
    t.storm_id = s->id;
    t.observed.assign(s->positions.begin(), s->positions.begin() + 13);
    return t;
}

}  // namespace

TEST(Export, GeoJsonStructureAndCoordinates) {
    const auto t = sample_trajectory();
    const auto doc = nlohmann::json::parse(to_geojson(t));
    EXPECT_EQ(doc.at("type"), "FeatureCollection");
    const auto& features = doc.at("features");
    ASSERT_EQ(features.size(), 2u + t.forecast.size());
    const auto& observed = features[0].at("geometry").at("coordinates");
    ASSERT_EQ(observed.size(), t.observed.size());
    for (std::size_t i = 0; i < t.observed.size(); ++i) {
        EXPECT_NEAR(observed[i][0].get<double>(), t.observed[i].lon, 1e-9);
        EXPECT_NEAR(observed[i][1].get<double>(), t.observed[i].lat, 1e-9);
    }
    const auto& line = features[1].at("geometry").at("coordinates");
    ASSERT_EQ(line.size(), t.forecast.size() + 1);
    for (std::size_t k = 0; k < t.forecast.size(); ++k) {
        const auto& point = features[2 + k];
        EXPECT_EQ(point.at("geometry").at("type"), "Point");
        EXPECT_EQ(point.at("properties").at("step_index").get<std::size_t>(), k + 1);
        EXPECT_EQ(point.at("properties").at("grid_id").get<std::int64_t>(), t.forecast[k].grid_id);
        EXPECT_NEAR(line[k + 1][1].get<double>(), t.forecast[k].center.lat, 1e-9);
        for (const auto& c : line[k + 1]) EXPECT_TRUE(std::isfinite(c.get<double>()));
    }
}

TEST(Export, EmptyForecastHasOnlyTheObservedTrack) {
    auto t = sample_trajectory();
    t.forecast.clear();
    const auto doc = nlohmann::json::parse(to_geojson(t));
    ASSERT_EQ(doc.at("features").size(), 1u);
    EXPECT_EQ(doc["features"][0]["properties"]["kind"], "observed");
}

TEST(Export, CsvMatchesGeoJson) {
    const auto t = sample_trajectory();
    std::istringstream csv(to_csv(t));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "kind,step,lat,lon,grid_id");
    std::vector<std::pair<double, double>> forecast;
    std::size_t observed = 0;
    while (std::getline(csv, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells[0] == "observed") {
            ++observed;
        } else {
            ASSERT_EQ(cells.size(), 5u);
            forecast.emplace_back(std::stod(cells[2]), std::stod(cells[3]));
        }
    }
    EXPECT_EQ(observed, t.observed.size());
    ASSERT_EQ(forecast.size(), t.forecast.size());
    const auto doc = nlohmann::json::parse(to_geojson(t));
    for (std::size_t k = 0; k < forecast.size(); ++k) {
        const auto& c = doc["features"][2 + k]["geometry"]["coordinates"];
        EXPECT_EQ(forecast[k].first, c[1].get<double>());
        EXPECT_EQ(forecast[k].second, c[0].get<double>());
    }
}
