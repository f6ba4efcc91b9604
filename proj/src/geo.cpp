#include "cgf/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cgf/error.hpp"

namespace cgf::geo {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kEarthRadiusMiles = kEarthRadiusKm / kKmPerMile;

// Whole number of cells spanned by [lo, hi); tolerates representation noise
// from non-integer resolutions.
std::int64_t span_cells(double lo, double hi, double resolution) {
    return static_cast<std::int64_t>(std::llround((hi - lo) / resolution));
}

std::int64_t cell_index(double value, double lo, double resolution) {
    return static_cast<std::int64_t>(std::floor((value - lo) / resolution));
}

}  // namespace

std::int64_t GridSpec::lon_cells() const { return span_cells(lon_min, lon_max, resolution); }
std::int64_t GridSpec::lat_cells() const { return span_cells(lat_min, lat_max, resolution); }
std::int64_t GridSpec::cell_count() const { return lon_cells() * lat_cells(); }

bool GridSpec::contains(const GeoPoint& p) const {
    return p.lon >= lon_min && p.lon < lon_max && p.lat >= lat_min && p.lat < lat_max;
}

void GridSpec::validate() const {
    if (!(resolution > 0.0) || !std::isfinite(resolution)) {
        throw RangeError("grid resolution must be positive");
    }
    if (!(lon_min < lon_max)) throw RangeError("grid lon_min must be below lon_max");
    if (!(lat_min < lat_max)) throw RangeError("grid lat_min must be below lat_max");
    auto whole = [this](double lo, double hi) {
        const double cells = (hi - lo) / resolution;
        return std::abs(cells - std::round(cells)) < 1e-9;
    };
    if (!whole(lon_min, lon_max) || !whole(lat_min, lat_max)) {
        throw RangeError("grid spans must be whole multiples of the resolution");
    }
}

double bearing(const GeoPoint& p1, const GeoPoint& p2) {
    if (p1 == p2) {
        throw UndefinedBearingError("bearing undefined between identical points");
    }
    const double phi1 = p1.lat * kDegToRad;
    const double phi2 = p2.lat * kDegToRad;
    const double dlambda = (p2.lon - p1.lon) * kDegToRad;
    const double y = std::sin(dlambda) * std::cos(phi2);
    const double x = std::cos(phi1) * std::sin(phi2) - std::sin(phi1) * std::cos(phi2) * std::cos(dlambda);
    double beta = std::atan2(y, x) * kRadToDeg;
    if (beta < 0.0) beta += 360.0;
    // -tiny + 360 rounds to exactly 360
    if (beta >= 360.0) beta -= 360.0;
    return beta;
}

double great_circle_distance(const GeoPoint& p1, const GeoPoint& p2) {
    const double phi1 = p1.lat * kDegToRad;
    const double phi2 = p2.lat * kDegToRad;
    const double dphi = phi2 - phi1;
    const double dlambda = (p2.lon - p1.lon) * kDegToRad;
    const double s1 = std::sin(dphi / 2.0);
    const double s2 = std::sin(dlambda / 2.0);
    const double h = std::min(1.0, s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2);
    return 2.0 * kEarthRadiusMiles * std::asin(std::sqrt(h));
}

MotionFeatures motion(const GeoPoint& from, const GeoPoint& to) {
    return {great_circle_distance(from, to), bearing(from, to)};
}

GeoPoint destination(const GeoPoint& start, double bearing_deg, double distance_miles) {
    if (distance_miles == 0.0) return start;
    const double delta = distance_miles / kEarthRadiusMiles;
    const double theta = bearing_deg * kDegToRad;
    const double phi1 = start.lat * kDegToRad;
    const double lambda1 = start.lon * kDegToRad;
    const double sin_phi2 =
        std::sin(phi1) * std::cos(delta) + std::cos(phi1) * std::sin(delta) * std::cos(theta);
    const double phi2 = std::asin(std::clamp(sin_phi2, -1.0, 1.0));
    const double lambda2 =
        lambda1 + std::atan2(std::sin(theta) * std::sin(delta) * std::cos(phi1),
                             std::cos(delta) - std::sin(phi1) * sin_phi2);
    double lon = lambda2 * kRadToDeg;
    lon = std::fmod(lon + 540.0, 360.0) - 180.0;
    return {phi2 * kRadToDeg, lon};
}

std::int64_t grid_id(const GeoPoint& p, const GridSpec& spec) {
    if (!(p.lon >= spec.lon_min && p.lon < spec.lon_max)) {
        throw RangeError("longitude " + std::to_string(p.lon) + " outside grid [" +
                         std::to_string(spec.lon_min) + ", " + std::to_string(spec.lon_max) + ")");
    }
    if (!(p.lat >= spec.lat_min && p.lat < spec.lat_max)) {
        throw RangeError("latitude " + std::to_string(p.lat) + " outside grid [" +
                         std::to_string(spec.lat_min) + ", " + std::to_string(spec.lat_max) + ")");
    }
    const std::int64_t lat_cells = spec.lat_cells();
    const std::int64_t lon_idx = std::min(cell_index(p.lon, spec.lon_min, spec.resolution), spec.lon_cells() - 1);
    const std::int64_t lat_idx = std::min(cell_index(p.lat, spec.lat_min, spec.resolution), lat_cells - 1);
    return lon_idx * lat_cells + lat_idx;
}

GeoPoint grid_center(std::int64_t id, const GridSpec& spec) {
    if (id < 0 || id >= spec.cell_count()) {
        throw RangeError("grid id " + std::to_string(id) + " outside [0, " +
                         std::to_string(spec.cell_count()) + ")");
    }
    const std::int64_t lat_cells = spec.lat_cells();
    const auto lon_idx = static_cast<double>(id / lat_cells);
    const auto lat_idx = static_cast<double>(id % lat_cells);
    return {spec.lat_min + (lat_idx + 0.5) * spec.resolution,
            spec.lon_min + (lon_idx + 0.5) * spec.resolution};
}

GridSpec fit_grid(std::span<const GeoPoint> points, double resolution) {
    if (points.empty()) throw RangeError("fit_grid needs at least one point");
    if (!(resolution > 0.0)) throw RangeError("grid resolution must be positive");
    auto [lat_lo, lat_hi] = std::minmax_element(points.begin(), points.end(),
                                                [](const auto& a, const auto& b) { return a.lat < b.lat; });
    auto [lon_lo, lon_hi] = std::minmax_element(points.begin(), points.end(),
                                                [](const auto& a, const auto& b) { return a.lon < b.lon; });
    auto lower = [resolution](double v) { return (std::floor(v / resolution) - 1.0) * resolution; };
    auto upper = [resolution](double v) { return (std::ceil(v / resolution) + 1.0) * resolution; };

    GridSpec spec;
    spec.resolution = resolution;
    spec.lon_min = lower(lon_lo->lon);
    spec.lon_max = upper(lon_hi->lon);
    spec.lat_min = std::max(-90.0, lower(lat_lo->lat));
    spec.lat_max = std::min(90.0, upper(lat_hi->lat));
    return spec;
}

}  // namespace cgf::geo
