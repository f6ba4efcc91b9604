#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "cgf/dataset.hpp"
#include "cgf/model.hpp"
#include "cgf/trainer.hpp"

namespace cgf {

/// Settings for the whole ingest -> train -> evaluate -> predict pipeline.
/// A JSON config file may set any subset; flags override the file.
struct CliConfig {
    std::string data = "data/hurdat2.txt";
    int min_year = 1944;
    int max_year = 2022;
    data::PrepareOptions dataset;
    model::ModelConfig model;
    train::TrainConfig train;
    std::string out = "out";

    void validate() const;
};

void to_json(nlohmann::json& j, const CliConfig& c);
void from_json(const nlohmann::json& j, CliConfig& c);

CliConfig load_cli_config(const std::filesystem::path& path);

/// Replaces every seed (split, model init, batch order) with `seed`.
void apply_seed(CliConfig& config, std::uint64_t seed);

/// Parses a CGF_SEED-style value; ConfigError if it is not a whole number.
std::uint64_t parse_seed(const std::string& text);

}  // namespace cgf
