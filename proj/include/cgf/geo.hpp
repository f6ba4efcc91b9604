#pragma once

#include <cstdint>
#include <span>

namespace cgf::geo {

inline constexpr double kEarthRadiusKm = 6371.0088;  // IUGG mean radius
inline constexpr double kKmPerMile = 1.609344;

struct GeoPoint {
    double lat = 0.0;  // degrees north, [-90, 90]
    double lon = 0.0;  // degrees east, [-180, 180]

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Regular latitude/longitude grid. Cell ids are laid out column-major:
/// id = lon_index * lat_cells + lat_index, so one step east adds lat_cells.
/// Bounds are half-open: lon in [lon_min, lon_max), lat in [lat_min, lat_max).
struct GridSpec {
    double lon_min = 0.0;
    double lon_max = 0.0;
    double lat_min = 0.0;
    double lat_max = 0.0;
    double resolution = 1.0;

    std::int64_t lon_cells() const;
    std::int64_t lat_cells() const;  // the latitude span in cells
    std::int64_t cell_count() const;

    bool contains(const GeoPoint& p) const;

    // Throws RangeError when bounds are inverted or spans are not a whole
    // number of cells.
    void validate() const;

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct MotionFeatures {
    double distance_miles = 0.0;
    double bearing_deg = 0.0;
};

/// Initial great-circle heading from p1 to p2 in degrees clockwise from
/// north, normalized to [0, 360). Throws UndefinedBearingError if p1 == p2.
double bearing(const GeoPoint& p1, const GeoPoint& p2);

/// Haversine distance on the mean-radius sphere, statute miles.
double great_circle_distance(const GeoPoint& p1, const GeoPoint& p2);

MotionFeatures motion(const GeoPoint& from, const GeoPoint& to);

/// Point reached by travelling `distance_miles` along the great circle that
/// leaves `start` with heading `bearing_deg`.
GeoPoint destination(const GeoPoint& start, double bearing_deg, double distance_miles);

std::int64_t grid_id(const GeoPoint& p, const GridSpec& spec);

GeoPoint grid_center(std::int64_t id, const GridSpec& spec);

/// Smallest whole-cell grid covering every point with one spare cell on
/// each side. Latitude bounds are clipped to [-90, 90].
GridSpec fit_grid(std::span<const GeoPoint> points, double resolution = 1.0);

}  // namespace cgf::geo
