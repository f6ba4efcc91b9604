#pragma once

// Reader and writer for NOAA's HURDAT2 best-track text format.
//
// A file is a sequence of storm blocks. Each block starts with a header
//
//   AL092004,                IVAN,     87,
//
// (basin + cyclone number + year, name, number of data rows) followed by
// exactly that many data rows
//
//   20040902, 1800,  , TD,  9.7N,  28.5W,  30, 1009, -999, ...
//
// (date, UTC time, record identifier, status, latitude, longitude, maximum
// sustained wind in knots, minimum pressure in mb, wind radii...). Negative
// wind or pressure values are missing-data sentinels.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cgf/geo.hpp"

namespace cgf::hurdat {

struct Timestamp {
    int year = 0;
    int month = 1;
    int day = 1;
    int hour = 0;
    int minute = 0;

    /// Minutes since 1970-01-01 00:00 UTC (proleptic Gregorian).
    std::int64_t minutes_since_epoch() const;

    friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

struct StormHeader {
    std::string basin;      // "AL" for the Atlantic archive
    int cyclone_number = 0;  // 1..99 within the season
    int year = 0;
    std::string name;        // uppercase, or "UNNAMED"
    int declared_rows = 0;

    /// ATCF-style identifier, e.g. "AL092004".
    std::string id() const;

    friend bool operator==(const StormHeader&, const StormHeader&) = default;
};

struct TrackPoint {
    Timestamp time;
    std::optional<char> record_kind;  // 'L' landfall, 'I' intensity peak, ...
    std::string status;               // TD, TS, HU, EX, ...
    double lat = 0.0;
    double lon = 0.0;                 // east positive
    std::optional<int> max_wind;      // knots
    std::optional<int> min_pressure;  // millibars
    std::vector<std::string> extra;   // wind radii etc., kept verbatim

    geo::GeoPoint position() const { return {lat, lon}; }

    friend bool operator==(const TrackPoint&, const TrackPoint&) = default;
};

struct StormTrack {
    StormHeader header;
    std::vector<TrackPoint> points;

    friend bool operator==(const StormTrack&, const StormTrack&) = default;
};

/// Parses a whole HURDAT2 file. Throws ParseError carrying the 1-based line
/// number on malformed headers, row count mismatches, bad coordinates and
/// non-increasing timestamps.
std::vector<StormTrack> parse_hurdat2(std::string_view text);

/// Writes tracks back in the NOAA column layout. Missing values are written
/// as -999; header row counts are taken from the actual point counts.
std::string serialize_hurdat2(std::span<const StormTrack> tracks);

/// Keeps storms with min_year <= year <= max_year and, within each, only
/// unflagged synoptic fixes (00/06/12/18 UTC) with wind and pressure present.
/// A track broken by a gap longer than 6 h is reduced to its longest
/// contiguous 6-hourly run (earliest on ties). Storms left with fewer than two
/// points are dropped.
std::vector<StormTrack> filter_tracks(std::span<const StormTrack> tracks, int min_year, int max_year);

struct DatasetSummary {
    std::size_t storms = 0;
    std::size_t points = 0;
    int min_year = 0;
    int max_year = 0;
    std::size_t max_track_length = 0;

    friend bool operator==(const DatasetSummary&, const DatasetSummary&) = default;
};

DatasetSummary dataset_summary(std::span<const StormTrack> tracks);

}  // namespace cgf::hurdat
