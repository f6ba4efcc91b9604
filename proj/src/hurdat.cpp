#include "cgf/hurdat.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <limits>

#include "cgf/error.hpp"

namespace cgf::hurdat {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Splits on commas and trims every field. A trailing comma yields no extra
// empty field.
std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            const auto last = trim(line.substr(start));
            if (!last.empty() || fields.empty()) fields.push_back(last);
            break;
        }
        fields.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return fields;
}

template <typename T>
std::optional<T> to_number(std::string_view s) {
    T value{};
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
    return value;
}

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

bool looks_like_header(std::string_view line) {
    const auto t = trim(line);
    return t.size() >= 2 && std::isalpha(static_cast<unsigned char>(t[0])) &&
           std::isalpha(static_cast<unsigned char>(t[1]));
}

StormHeader parse_header(std::string_view line, std::size_t line_no) {
    const auto fields = split_fields(line);
    if (fields.size() != 3) {
        throw ParseError(line_no, "storm header needs 3 fields, found " + std::to_string(fields.size()));
    }
    const auto id = fields[0];
    if (id.size() != 8 || !std::isalpha(static_cast<unsigned char>(id[0])) ||
        !std::isalpha(static_cast<unsigned char>(id[1])) || !all_digits(id.substr(2))) {
        throw ParseError(line_no, "malformed storm id '" + std::string(id) + "'");
    }
    StormHeader h;
    h.basin = std::string(id.substr(0, 2));
    h.cyclone_number = *to_number<int>(id.substr(2, 2));
    h.year = *to_number<int>(id.substr(4, 4));
    h.name = std::string(fields[1]);
    const auto rows = to_number<int>(fields[2]);
    if (!rows || *rows < 0) {
        throw ParseError(line_no, "non-numeric row count '" + std::string(fields[2]) + "'");
    }
    h.declared_rows = *rows;
    return h;
}

double parse_coordinate(std::string_view field, char positive, char negative, double limit,
                        std::size_t line_no) {
    if (field.size() < 2) throw ParseError(line_no, "empty coordinate");
    const char hemi = static_cast<char>(std::toupper(static_cast<unsigned char>(field.back())));
    const auto magnitude = to_number<double>(trim(field.substr(0, field.size() - 1)));
    if (!magnitude || (hemi != positive && hemi != negative) || *magnitude < 0.0) {
        throw ParseError(line_no, "unparseable coordinate '" + std::string(field) + "'");
    }
    double value = hemi == positive ? *magnitude : -*magnitude;
    if (limit == 180.0 && value < -180.0) value += 360.0;  // e.g. "185.0W"
    if (limit == 180.0 && value > 180.0) value -= 360.0;
    if (value < -limit || value > limit) {
        throw ParseError(line_no, "coordinate out of range '" + std::string(field) + "'");
    }
    return value;
}

std::optional<int> parse_measure(std::string_view field, const char* what, std::size_t line_no) {
    const auto v = to_number<int>(field);
    if (!v) throw ParseError(line_no, std::string("non-numeric ") + what + " '" + std::string(field) + "'");
    if (*v < 0) return std::nullopt;  // -99 / -999 sentinels
    return v;
}

TrackPoint parse_data_row(std::string_view line, std::size_t line_no) {
    const auto f = split_fields(line);
    if (f.size() < 8) {
        throw ParseError(line_no, "data row needs at least 8 fields, found " + std::to_string(f.size()));
    }
    TrackPoint p;
    if (f[0].size() != 8 || !all_digits(f[0])) throw ParseError(line_no, "malformed date '" + std::string(f[0]) + "'");
    if (f[1].size() != 4 || !all_digits(f[1])) throw ParseError(line_no, "malformed time '" + std::string(f[1]) + "'");
    p.time.year = *to_number<int>(f[0].substr(0, 4));
    p.time.month = *to_number<int>(f[0].substr(4, 2));
    p.time.day = *to_number<int>(f[0].substr(6, 2));
    p.time.hour = *to_number<int>(f[1].substr(0, 2));
    p.time.minute = *to_number<int>(f[1].substr(2, 2));
    const std::chrono::year_month_day ymd{std::chrono::year{p.time.year},
                                          std::chrono::month{static_cast<unsigned>(p.time.month)},
                                          std::chrono::day{static_cast<unsigned>(p.time.day)}};
    if (!ymd.ok() || p.time.hour > 23 || p.time.minute > 59) {
        throw ParseError(line_no, "invalid date/time '" + std::string(f[0]) + " " + std::string(f[1]) + "'");
    }
    if (f[2].size() > 1) throw ParseError(line_no, "record identifier must be one letter");
    if (f[2].size() == 1) p.record_kind = f[2][0];
    p.status = std::string(f[3]);
    p.lat = parse_coordinate(f[4], 'N', 'S', 90.0, line_no);
    p.lon = parse_coordinate(f[5], 'E', 'W', 180.0, line_no);
    p.max_wind = parse_measure(f[6], "wind", line_no);
    p.min_pressure = parse_measure(f[7], "pressure", line_no);
    if (p.min_pressure && *p.min_pressure == 0) p.min_pressure.reset();
    for (std::size_t i = 8; i < f.size(); ++i) p.extra.emplace_back(f[i]);
    return p;
}

std::string format_coordinate(double value, char positive, char negative) {
    char buf[32];
    const double mag = value < 0.0 ? -value : value;
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, mag);
    std::string s(buf, ptr);
    if (s.find('.') == std::string::npos) s += ".0";
    s += value < 0.0 ? negative : positive;
    return s;
}

bool six_hours_apart(const TrackPoint& a, const TrackPoint& b) {
    return b.time.minutes_since_epoch() - a.time.minutes_since_epoch() == 360;
}

}  // namespace

std::int64_t Timestamp::minutes_since_epoch() const {
    using namespace std::chrono;
    const sys_days days{year_month_day{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                                       std::chrono::day{static_cast<unsigned>(day)}}};
    return static_cast<std::int64_t>(days.time_since_epoch().count()) * 1440 + hour * 60 + minute;
}

std::string StormHeader::id() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%02d%04d", basin.c_str(), cyclone_number, year);
    return buf;
}

std::vector<StormTrack> parse_hurdat2(std::string_view text) {
    std::vector<StormTrack> tracks;
    StormTrack* current = nullptr;
    std::size_t header_line = 0;
    std::size_t line_no = 0;
    std::size_t pos = 0;

    auto close_current = [&](std::size_t at_line) {
        if (current && static_cast<int>(current->points.size()) != current->header.declared_rows) {
            throw ParseError(at_line, "storm " + current->header.id() + " (header at line " +
                                          std::to_string(header_line) + ") declares " +
                                          std::to_string(current->header.declared_rows) + " rows but has " +
                                          std::to_string(current->points.size()));
        }
    };

    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;

        const bool expecting_rows = current && static_cast<int>(current->points.size()) < current->header.declared_rows;
        if (looks_like_header(line)) {
            if (expecting_rows) close_current(line_no);
            tracks.push_back(StormTrack{parse_header(line, line_no), {}});
            current = &tracks.back();
            header_line = line_no;
            continue;
        }
        if (!current) throw ParseError(line_no, "data row before any storm header");
        if (!expecting_rows) {
            throw ParseError(line_no, "storm " + current->header.id() + " has more rows than the " +
                                          std::to_string(current->header.declared_rows) + " declared");
        }
        TrackPoint p = parse_data_row(line, line_no);
        if (!current->points.empty() && !(current->points.back().time < p.time)) {
            throw ParseError(line_no, "timestamps not increasing in storm " + current->header.id());
        }
        current->points.push_back(std::move(p));
    }
    close_current(line_no);
    return tracks;
}

std::string serialize_hurdat2(std::span<const StormTrack> tracks) {
    std::string out;
    char buf[128];
    for (const auto& t : tracks) {
        std::snprintf(buf, sizeof buf, "%s,%19s,%7zu,\n", t.header.id().c_str(), t.header.name.c_str(),
                      t.points.size());
        out += buf;
        for (const auto& p : t.points) {
            std::snprintf(buf, sizeof buf, "%04d%02d%02d, %02d%02d, %1c, %2s, %5s, %6s, %3d, %4d", p.time.year,
                          p.time.month, p.time.day, p.time.hour, p.time.minute,
                          p.record_kind ? *p.record_kind : ' ', p.status.c_str(),
                          format_coordinate(p.lat, 'N', 'S').c_str(), format_coordinate(p.lon, 'E', 'W').c_str(),
                          p.max_wind.value_or(-999), p.min_pressure.value_or(-999));
            out += buf;
            for (const auto& e : p.extra) {
                std::snprintf(buf, sizeof buf, ", %4s", e.c_str());
                out += buf;
            }
            out += ",\n";
        }
    }
    return out;
}

std::vector<StormTrack> filter_tracks(std::span<const StormTrack> tracks, int min_year, int max_year) {
    std::vector<StormTrack> kept;
    for (const auto& track : tracks) {
        if (track.header.year < min_year || track.header.year > max_year) continue;

        std::vector<TrackPoint> usable;
        for (const auto& p : track.points) {
            const bool synoptic = p.time.minute == 0 && p.time.hour % 6 == 0;
            const bool measured = p.max_wind && *p.max_wind > 0 && p.min_pressure && *p.min_pressure > 0;
            if (synoptic && !p.record_kind && measured) usable.push_back(p);
        }

        // Longest contiguous 6-hourly run.
        std::size_t best_begin = 0, best_len = 0;
        for (std::size_t begin = 0; begin < usable.size();) {
            std::size_t end = begin + 1;
            while (end < usable.size() && six_hours_apart(usable[end - 1], usable[end])) ++end;
            if (end - begin > best_len) {
                best_begin = begin;
                best_len = end - begin;
            }
            begin = end;
        }
        if (best_len < 2) continue;

        StormTrack out{track.header, {}};
        out.points.assign(usable.begin() + static_cast<std::ptrdiff_t>(best_begin),
                          usable.begin() + static_cast<std::ptrdiff_t>(best_begin + best_len));
        out.header.declared_rows = static_cast<int>(out.points.size());
        kept.push_back(std::move(out));
    }
    return kept;
}

DatasetSummary dataset_summary(std::span<const StormTrack> tracks) {
    DatasetSummary s;
    if (tracks.empty()) return s;
    s.min_year = std::numeric_limits<int>::max();
    s.max_year = std::numeric_limits<int>::min();
    for (const auto& t : tracks) {
        ++s.storms;
        s.points += t.points.size();
        s.min_year = std::min(s.min_year, t.header.year);
        s.max_year = std::max(s.max_year, t.header.year);
        s.max_track_length = std::max(s.max_track_length, t.points.size());
    }
    return s;
}

}  // namespace cgf::hurdat
