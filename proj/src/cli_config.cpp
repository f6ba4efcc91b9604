#include "cgf/cli_config.hpp"

#include <charconv>

#include "cgf/binary_io.hpp"
#include "cgf/error.hpp"
#include "cgf/json_io.hpp"

namespace cgf {

void CliConfig::validate() const {
    if (min_year > max_year) throw ConfigError("min_year must not exceed max_year");
    if (!(dataset.resolution > 0.0)) throw ConfigError("grid resolution must be positive");
    if (dataset.window < 1) throw ConfigError("window must be at least 1");
    if (dataset.window != model.seq_len) {
        throw ConfigError("dataset window (" + std::to_string(dataset.window) + ") must equal model seq_len (" +
                          std::to_string(model.seq_len) + ")");
    }
    if (!(dataset.split_ratio > 0.0 && dataset.split_ratio < 1.0)) throw ConfigError("split_ratio must be in (0, 1)");
    model.validate();
    train.validate();
}

void to_json(nlohmann::json& j, const CliConfig& c) {
    j = {{"data", c.data},
         {"years", {c.min_year, c.max_year}},
         {"dataset", c.dataset},
         {"model", c.model},
         {"train", c.train},
         {"out", c.out}};
}

void from_json(const nlohmann::json& j, CliConfig& c) {
    c.data = j.value("data", c.data);
    if (j.contains("years")) {
        c.min_year = j.at("years").at(0).get<int>();
        c.max_year = j.at("years").at(1).get<int>();
    }
    if (j.contains("dataset")) j.at("dataset").get_to(c.dataset);
    if (j.contains("model")) j.at("model").get_to(c.model);
    if (j.contains("train")) j.at("train").get_to(c.train);
    c.out = j.value("out", c.out);
}

CliConfig load_cli_config(const std::filesystem::path& path) {
    const auto text = io::read_text_file(path.string());
    CliConfig c;
    try {
        nlohmann::json::parse(text).get_to(c);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return c;
}

void apply_seed(CliConfig& config, std::uint64_t seed) {
    config.dataset.seed = seed;
    config.model.seed = seed;
    config.train.seed = seed;
}

std::uint64_t parse_seed(const std::string& text) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw ConfigError("seed '" + text + "' is not a non-negative integer");
    }
    return v;
}

}  // namespace cgf
