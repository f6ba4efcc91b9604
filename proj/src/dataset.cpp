#include "cgf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <json.hpp>

#include "cgf/binary_io.hpp"
#include "cgf/error.hpp"
#include "cgf/json_io.hpp"
#include "cgf/random.hpp"

namespace cgf::data {
namespace {

constexpr char kMagic[4] = {'C', 'G', 'F', '1'};
constexpr std::uint32_t kCacheVersion = 1;

}  // namespace

std::string_view feature_name(std::size_t feature) {
    static constexpr std::string_view names[kFeatureCount] = {"wind", "pressure", "distance", "bearing", "grid_id"};
    if (feature >= kFeatureCount) throw RangeError("feature index out of range");
    return names[feature];
}

std::vector<StepFeatures> derive_steps(const hurdat::StormTrack& track, const geo::GridSpec& grid,
                                       StationaryPolicy policy, std::size_t* stationary_count) {
    const auto& pts = track.points;
    if (pts.size() < 2) {
        throw InputError("storm " + track.header.id() + " needs at least 2 points to derive motion");
    }
    std::vector<StepFeatures> steps;
    steps.reserve(pts.size() - 1);
    double last_bearing = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        StepFeatures s;
        s.wind = pts[i].max_wind.value_or(0);
        s.pressure = pts[i].min_pressure.value_or(0);
        s.grid_id = geo::grid_id(pts[i].position(), grid);
        s.distance = geo::great_circle_distance(pts[i].position(), pts[i + 1].position());
        if (pts[i].position() == pts[i + 1].position()) {
            if (policy == StationaryPolicy::fail) {
                throw UndefinedBearingError("storm " + track.header.id() + ": fixes " + std::to_string(i) +
                                            " and " + std::to_string(i + 1) + " are at the same position");
            }
            s.bearing = last_bearing;
            if (stationary_count) ++*stationary_count;
        } else {
            s.bearing = geo::bearing(pts[i].position(), pts[i + 1].position());
        }
        last_bearing = s.bearing;
        steps.push_back(s);
    }
    return steps;
}

PaddedSequence pad_track(std::span<const StepFeatures> steps, std::size_t target_len) {
    if (steps.size() > target_len) {
        throw InputError("sequence of " + std::to_string(steps.size()) + " steps exceeds pad length " +
                         std::to_string(target_len));
    }
    PaddedSequence seq;
    seq.rows.assign(steps.begin(), steps.end());
    seq.rows.resize(target_len, StepFeatures{});
    seq.valid_len = steps.size();
    return seq;
}

std::vector<WindowSample> make_windows(const PaddedSequence& seq, std::size_t window) {
    std::vector<WindowSample> out;
    if (window == 0 || seq.valid_len < window + 1) return out;
    for (std::size_t s = 0; s + window + 1 <= seq.valid_len; ++s) {
        WindowSample w;
        w.history.assign(seq.rows.begin() + static_cast<std::ptrdiff_t>(s),
                         seq.rows.begin() + static_cast<std::ptrdiff_t>(s + window));
        w.raw_label = seq.rows[s + window].grid_id;
        w.offset = s;
        out.push_back(std::move(w));
    }
    return out;
}

Normalizer Normalizer::fit(std::span<const WindowSample> train, const geo::GridSpec& grid) {
    if (train.empty()) throw InputError("cannot fit a normalizer on an empty training set");
    Normalizer n;
    std::array<double, kFeatureCount> lo, hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const auto& w : train) {
        for (const auto& row : w.history) {
            const auto v = row.values();
            for (std::size_t f = 0; f < kFeatureCount; ++f) {
                lo[f] = std::min(lo[f], v[f]);
                hi[f] = std::max(hi[f], v[f]);
            }
        }
    }
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        if (f == kGridId) continue;
        if (!(hi[f] > lo[f])) {
            throw InputError("feature '" + std::string(feature_name(f)) + "' is constant over the training set");
        }
        n.features[f] = {lo[f], hi[f]};
    }
    const auto cells = grid.cell_count();
    if (cells < 2) throw InputError("grid must have at least two cells");
    n.label = {0.0, static_cast<double>(cells - 1)};
    n.features[kGridId] = n.label;
    return n;
}

std::vector<double> Normalizer::transform_rows(std::span<const StepFeatures> rows, std::size_t* clamped) const {
    std::vector<double> out;
    out.reserve(rows.size() * kFeatureCount);
    for (const auto& row : rows) {
        const auto v = row.values();
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            double u = transform(f, v[f]);
            if (u > kTestClamp || u < -kTestClamp) {
                u = std::clamp(u, -kTestClamp, kTestClamp);
                if (clamped) ++*clamped;
            }
            out.push_back(u);
        }
    }
    return out;
}

std::size_t Normalizer::apply(WindowSample& sample) const {
    std::size_t clamped = 0;
    sample.inputs = transform_rows(sample.history, &clamped);
    sample.label = label_transform(sample.raw_label);
    return clamped;
}

SplitDataset split_by_storm(std::vector<std::vector<WindowSample>> by_storm, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must be in (0, 1)");
    std::vector<std::size_t> order;
    std::size_t total = 0;
    for (std::size_t i = 0; i < by_storm.size(); ++i) {
        if (by_storm[i].empty()) continue;
        order.push_back(i);
        total += by_storm[i].size();
    }
    if (order.size() < 2) throw InputError("need at least two storms with windows to split");

    Rng rng(seed);
    rng.shuffle(order);

    const double target = ratio * static_cast<double>(total);
    std::vector<std::size_t> train_ids, test_ids;
    double in_train = 0.0;
    for (std::size_t id : order) {
        const auto n = static_cast<double>(by_storm[id].size());
        if (std::abs(in_train + n - target) <= std::abs(in_train - target)) {
            train_ids.push_back(id);
            in_train += n;
        } else {
            test_ids.push_back(id);
        }
    }
    if (test_ids.empty()) {
        test_ids.push_back(train_ids.back());
        train_ids.pop_back();
    } else if (train_ids.empty()) {
        train_ids.push_back(test_ids.front());
        test_ids.erase(test_ids.begin());
    }

    SplitDataset split;
    split.seed = seed;
    auto gather = [&](const std::vector<std::size_t>& ids, std::vector<WindowSample>& dst) {
        for (std::size_t id : ids) {
            for (auto& w : by_storm[id]) {
                w.storm = id;
                dst.push_back(std::move(w));
            }
        }
    };
    gather(train_ids, split.train);
    gather(test_ids, split.test);
    split.train_storms = std::move(train_ids);
    split.test_storms = std::move(test_ids);
    return split;
}

const StormRecord* PreparedDataset::find(std::string_view storm_id) const {
    for (const auto& s : storms) {
        if (s.id == storm_id) return &s;
    }
    return nullptr;
}

namespace {

std::vector<WindowSample> storm_windows(const StormRecord& storm, std::size_t index, const PrepareOptions& opt) {
    auto windows = make_windows(pad_track(storm.steps, opt.pad_length), opt.window);
    for (auto& w : windows) w.storm = index;
    return windows;
}

}  // namespace

PreparedDataset prepare_dataset(std::span<const hurdat::StormTrack> filtered, const PrepareOptions& options) {
    if (filtered.empty()) throw InputError("no storms left after filtering");
    PreparedDataset ds;
    ds.options = options;
    ds.summary = hurdat::dataset_summary(filtered);

    std::vector<geo::GeoPoint> all_points;
    for (const auto& t : filtered) {
        for (const auto& p : t.points) all_points.push_back(p.position());
    }
    ds.grid = geo::fit_grid(all_points, options.resolution);

    std::vector<std::vector<WindowSample>> by_storm;
    for (const auto& t : filtered) {
        StormRecord rec;
        rec.id = t.header.id();
        rec.name = t.header.name;
        rec.year = t.header.year;
        for (const auto& p : t.points) rec.positions.push_back(p.position());
        rec.steps = derive_steps(t, ds.grid, StationaryPolicy::carry_bearing, &ds.stationary_steps);
        for (const auto& s : rec.steps) ds.max_step_miles = std::max(ds.max_step_miles, s.distance);
        by_storm.push_back(storm_windows(rec, ds.storms.size(), options));
        ds.storms.push_back(std::move(rec));
    }

    auto split = split_by_storm(std::move(by_storm), options.split_ratio, options.seed);
    for (std::size_t id : split.test_storms) ds.storms[id].test = true;
    ds.normalizer = Normalizer::fit(split.train, ds.grid);
    return ds;
}

WindowSets window_sets(const PreparedDataset& dataset) {
    WindowSets sets;
    for (std::size_t i = 0; i < dataset.storms.size(); ++i) {
        auto windows = storm_windows(dataset.storms[i], i, dataset.options);
        auto& dst = dataset.storms[i].test ? sets.test : sets.train;
        for (auto& w : windows) {
            const std::size_t clamped = dataset.normalizer.apply(w);
            if (dataset.storms[i].test) sets.clamped += clamped;
            dst.push_back(std::move(w));
        }
    }
    return sets;
}

std::filesystem::path sidecar_path(const std::filesystem::path& cache_path) {
    auto p = cache_path;
    p.replace_extension(".json");
    return p;
}

void write_dataset(const PreparedDataset& ds, const std::filesystem::path& path) {
    io::ByteWriter w;
    w.raw(kMagic, 4);
    w.u32(kCacheVersion);
    w.u32(static_cast<std::uint32_t>(ds.storms.size()));
    for (const auto& s : ds.storms) {
        w.str(s.id);
        w.str(s.name);
        w.u32(static_cast<std::uint32_t>(s.year));
        w.u32(s.test ? 1u : 0u);
    }
    for (const auto& s : ds.storms) {
        w.u32(static_cast<std::uint32_t>(s.positions.size()));
        for (const auto& p : s.positions) {
            w.f64(p.lat);
            w.f64(p.lon);
        }
        w.u32(static_cast<std::uint32_t>(s.steps.size()));
        for (const auto& st : s.steps) {
            for (double v : st.values()) w.f64(v);
        }
    }
    w.append_crc();
    io::write_file(path.string(), w.bytes());

    nlohmann::json side = {
        {"format", "CGF1"},
        {"version", kCacheVersion},
        {"grid", ds.grid},
        {"normalizer", ds.normalizer},
        {"options", ds.options},
        {"summary", ds.summary},
        {"max_step_miles", ds.max_step_miles},
        {"stationary_steps", ds.stationary_steps},
        {"storm_count", ds.storms.size()},
    };
    io::write_text_file(sidecar_path(path).string(), side.dump(2) + "\n");
}

PreparedDataset read_dataset(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path.string());
    io::ByteReader r(io::checked_payload(bytes));
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path.string() + " is not a CGF1 dataset cache");
    if (r.u32() != kCacheVersion) throw FormatError("unsupported dataset cache version");

    PreparedDataset ds;
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(io::read_text_file(sidecar_path(path).string()));
        side.at("grid").get_to(ds.grid);
        side.at("normalizer").get_to(ds.normalizer);
        side.at("options").get_to(ds.options);
        side.at("summary").get_to(ds.summary);
        ds.max_step_miles = side.at("max_step_miles").get<double>();
        ds.stationary_steps = side.value("stationary_steps", std::size_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad dataset sidecar: " + std::string(e.what()));
    }

    const std::uint32_t count = r.u32();
    if (count != side.value("storm_count", std::size_t{0})) throw FormatError("sidecar storm count mismatch");
    ds.storms.resize(count);
    for (auto& s : ds.storms) {
        s.id = r.str();
        s.name = r.str();
        s.year = static_cast<int>(r.u32());
        s.test = r.u32() != 0;
    }
    for (auto& s : ds.storms) {
        const std::uint32_t np = r.u32();
        const auto pos = r.f64s(std::size_t{np} * 2);
        for (std::size_t i = 0; i < np; ++i) s.positions.push_back({pos[2 * i], pos[2 * i + 1]});
        const std::uint32_t ns = r.u32();
        const auto vals = r.f64s(std::size_t{ns} * kFeatureCount);
        for (std::size_t i = 0; i < ns; ++i) {
            const double* v = vals.data() + i * kFeatureCount;
            s.steps.push_back({v[0], v[1], v[2], v[3], static_cast<std::int64_t>(std::llround(v[4]))});
        }
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes in dataset cache");
    return ds;
}

}  // namespace cgf::data
