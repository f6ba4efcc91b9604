#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cgf/cli_config.hpp"
#include "cgf/error.hpp"
#include "cgf/json_io.hpp"

using namespace cgf;

TEST(CliConfig, DefaultsAreValid) {
    const CliConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.dataset.window, c.model.seq_len);
}

TEST(CliConfig, WindowMustMatchSequenceLength) {
    CliConfig c;
    c.dataset.window = 8;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(CliConfig, JsonRoundTripAndPartialOverrides) {
    CliConfig c;
    c.min_year = 1970;
    c.model.d_model = 16;
    c.train.epochs = 5;
    const nlohmann::json j = c;
    const auto back = j.get<CliConfig>();
    EXPECT_EQ(back.min_year, 1970);
    EXPECT_EQ(back.model, c.model);
    EXPECT_EQ(back.train, c.train);

    const auto partial = nlohmann::json::parse(R"({"train": {"epochs": 3}})").get<CliConfig>();
    EXPECT_EQ(partial.train.epochs, 3u);
    EXPECT_EQ(partial.model, model::ModelConfig{});
    EXPECT_EQ(partial.max_year, 2022);
}

TEST(CliConfig, LoadErrors) {
    const auto dir = std::filesystem::temp_directory_path();
    const auto bad = dir / "cgf_cli_config_bad.json";
    std::ofstream(bad) << "{ not json";
    EXPECT_THROW(load_cli_config(bad), ConfigError);
    EXPECT_THROW(load_cli_config(dir / "cgf_cli_config_missing.json"), InputError);

    const auto good = dir / "cgf_cli_config_good.json";
    std::ofstream(good) << R"({"out": "elsewhere", "years": [1980, 1990]})";
    const auto c = load_cli_config(good);
    EXPECT_EQ(c.out, "elsewhere");
    EXPECT_EQ(c.min_year, 1980);
    EXPECT_EQ(c.max_year, 1990);
}

TEST(CliConfig, SeedHandling) {
    EXPECT_EQ(parse_seed("17"), 17u);
    EXPECT_THROW(parse_seed("17x"), ConfigError);
    EXPECT_THROW(parse_seed(""), ConfigError);
    EXPECT_THROW(parse_seed("-3"), ConfigError);
    CliConfig c;
    apply_seed(c, 99);
    EXPECT_EQ(c.dataset.seed, 99u);
    EXPECT_EQ(c.model.seed, 99u);
    EXPECT_EQ(c.train.seed, 99u);
}
