#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cgf/binary_io.hpp"
#include "synthetic_hurdat.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

const fs::path& work_dir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "cgf_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run run_cgf(const std::string& args) {
    static int counter = 0;
    const auto base = work_dir() / ("run" + std::to_string(counter++));
    const std::string cmd = std::string(CGF_CLI_PATH) + " " + args + " > " + base.string() + ".out 2> " +
                            base.string() + ".err";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(base.string() + ".out");
    r.err = slurp(base.string() + ".err");
    return r;
}

// Three synthetic storms, 2004-2006; the first is AL092004 IVAN.
const fs::path& fixture_file() {
    static const fs::path path = [] {
        cgf::testing::SyntheticOptions opts;
        opts.storms = 3;
        opts.first_year = 2004;
        opts.last_year = 2006;
        const auto p = work_dir() / "fixture.txt";
        cgf::io::write_text_file(p.string(), cgf::testing::synthetic_hurdat2(opts));
        return p;
    }();
    return path;
}

const fs::path& tiny_config() {
    static const fs::path path = [] {
        const auto p = work_dir() / "tiny.json";
        cgf::io::write_text_file(p.string(), R"({"model": {"d_model": 16, "n_heads": 2, "n_layers": 2, "ffn_hidden": 32},
 "train": {"epochs": 6, "batch_size": 16}})");
        return p;
    }();
    return path;
}

fs::path ingested(const std::string& name) {
    const auto dir = work_dir() / name;
    if (!fs::exists(dir / "dataset.cgf")) {
        const auto r = run_cgf("ingest --data " + fixture_file().string() + " --out " + dir.string());
        EXPECT_EQ(r.code, 0) << r.err;
    }
    return dir;
}

fs::path trained(const std::string& name) {
    const auto dir = ingested(name);
    if (!fs::exists(dir / "checkpoint.cgf")) {
        const auto r = run_cgf("train --config " + tiny_config().string() + " --out " + dir.string());
        EXPECT_EQ(r.code, 0) << r.err;
    }
    return dir;
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += !line.empty();
    return n;
}

}  // namespace

TEST(CliIngest, FixtureSummary) {
    const auto dir = ingested("ingest");
    const auto summary = json::parse(slurp(dir / "summary.json"));
    EXPECT_EQ(summary.at("storms"), 3);
    EXPECT_EQ(summary.at("raw").at("storms"), 3);
    EXPECT_GT(summary.at("points").get<int>(), 0);
    EXPECT_EQ(summary.at("years"), json::array({2004, 2006}));
    EXPECT_TRUE(summary.contains("max_len"));
    EXPECT_TRUE(fs::exists(dir / "dataset.cgf"));
    EXPECT_TRUE(fs::exists(dir / "dataset.json"));
}

TEST(CliIngest, MissingFileExitsTwoNamingThePath) {
    const auto missing = (work_dir() / "no_such_hurdat.txt").string();
    const auto r = run_cgf("ingest --data " + missing + " --out " + (work_dir() / "missing").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST(CliIngest, MalformedFileExitsTwoWithLineNumber) {
    const auto bad = work_dir() / "bad.txt";
    auto text = slurp(fixture_file());
    text.insert(text.find('\n') + 1, "garbage line\n");
    cgf::io::write_text_file(bad.string(), text);
    const auto r = run_cgf("ingest --data " + bad.string() + " --out " + (work_dir() / "bad").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST(CliTrain, TinyRunIsFastAndLogsEveryEpoch) {
    const auto dir = ingested("train_fast");
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_cgf("train --config " + tiny_config().string() + " --out " + dir.string() + " --epochs 4");
    const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_LT(secs, 60.0);
    EXPECT_EQ(line_count(dir / "train_log.jsonl"), 4u);
    EXPECT_TRUE(fs::exists(dir / "checkpoint.cgf"));
}

TEST(CliTrain, SameSeedSameMetrics) {
    const auto a = trained("seed_a");
    const auto b = trained("seed_b");
    ASSERT_EQ(run_cgf("evaluate --checkpoint " + (a / "checkpoint.cgf").string()).code, 0);
    ASSERT_EQ(run_cgf("evaluate --checkpoint " + (b / "checkpoint.cgf").string()).code, 0);
    EXPECT_EQ(slurp(a / "metrics.json"), slurp(b / "metrics.json"));
    EXPECT_EQ(slurp(a / "checkpoint.cgf"), slurp(b / "checkpoint.cgf"));
}

TEST(CliTrain, MissingDatasetExitsTwo) {
    const auto r = run_cgf("train --out " + (work_dir() / "empty").string());
    EXPECT_EQ(r.code, 2);
}

TEST(CliTrain, BadSeedEnvironmentExitsTwo) {
    ::setenv("CGF_SEED", "abc", 1);
    const auto r = run_cgf("ingest --data " + fixture_file().string() + " --out " + (work_dir() / "env").string());
    ::unsetenv("CGF_SEED");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("abc"), std::string::npos) << r.err;
}

TEST(CliEvaluate, MetricsSchema) {
    const auto dir = trained("evaluate");
    const auto r = run_cgf("evaluate --checkpoint " + (dir / "checkpoint.cgf").string());
    ASSERT_EQ(r.code, 0) << r.err;
    const auto m = json::parse(slurp(dir / "metrics.json"));
    for (const char* key : {"mse", "accuracy", "accuracy_within_1", "baseline_accuracy"}) {
        ASSERT_TRUE(m.contains(key)) << key;
        EXPECT_TRUE(m[key].is_number()) << key;
    }
    EXPECT_GE(m["mse"].get<double>(), 0.0);
    for (const char* key : {"accuracy", "accuracy_within_1", "baseline_accuracy"}) {
        EXPECT_GE(m[key].get<double>(), 0.0);
        EXPECT_LE(m[key].get<double>(), 1.0);
    }
    EXPECT_LE(m["accuracy"].get<double>(), m["accuracy_within_1"].get<double>());
    EXPECT_GT(m["count"].get<int>(), 0);
    EXPECT_TRUE(m.at("train").contains("accuracy"));
}

TEST(CliEvaluate, MissingCheckpointExitsTwo) {
    const auto r = run_cgf("evaluate --checkpoint " + (work_dir() / "nope.cgf").string());
    EXPECT_EQ(r.code, 2);
}

TEST(CliPredict, IvanFourStepsGeoJson) {
    const auto dir = trained("predict");
    const auto r = run_cgf("predict --checkpoint " + (dir / "checkpoint.cgf").string() + " --storm-id AL092004 --steps 4");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto doc = json::parse(slurp(dir / "trajectory.geojson"));
    std::size_t points = 0;
    for (const auto& f : doc.at("features")) {
        if (f["properties"].contains("step_index")) ++points;
    }
    EXPECT_EQ(points, 4u);
}

TEST(CliPredict, UnknownStormListsAvailableIds) {
    const auto dir = trained("predict");
    const auto r = run_cgf("predict --checkpoint " + (dir / "checkpoint.cgf").string() + " --storm-id AL992099");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("AL092004"), std::string::npos) << r.err;
}

TEST(CliPredict, CsvAndGeoJsonAgree) {
    const auto dir = trained("predict");
    const auto ck = (dir / "checkpoint.cgf").string();
    ASSERT_EQ(run_cgf("predict --checkpoint " + ck + " --storm-id AL092004 --steps 6").code, 0);
    ASSERT_EQ(run_cgf("predict --checkpoint " + ck + " --storm-id AL092004 --steps 6 --format csv").code, 0);
    const auto doc = json::parse(slurp(dir / "trajectory.geojson"));
    std::vector<std::pair<double, double>> from_geojson;
    for (const auto& f : doc.at("features")) {
        if (f["properties"].contains("step_index")) {
            from_geojson.emplace_back(f["geometry"]["coordinates"][1].get<double>(),
                                      f["geometry"]["coordinates"][0].get<double>());
        }
    }
    std::vector<std::pair<double, double>> from_csv;
    std::istringstream csv(slurp(dir / "trajectory.csv"));
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
        if (line.rfind("forecast,", 0) != 0) continue;
        std::stringstream ss(line);
        std::string kind, step, lat, lon;
        std::getline(ss, kind, ',');
        std::getline(ss, step, ',');
        std::getline(ss, lat, ',');
        std::getline(ss, lon, ',');
        from_csv.emplace_back(std::stod(lat), std::stod(lon));
    }
    ASSERT_EQ(from_csv.size(), 6u);
    EXPECT_EQ(from_csv, from_geojson);
}

TEST(CliUsage, UnknownSubcommandExitsTwo) { EXPECT_EQ(run_cgf("frobnicate").code, 2); }
