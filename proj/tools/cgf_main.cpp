#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cgf/binary_io.hpp"
#include "cgf/cli_config.hpp"
#include "cgf/dataset.hpp"
#include "cgf/error.hpp"
#include "cgf/forecast.hpp"
#include "cgf/hurdat.hpp"
#include "cgf/json_io.hpp"
#include "cgf/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

struct Overrides {
    std::string config;
    std::optional<std::string> data;
    std::optional<std::string> out;
    std::optional<int> min_year, max_year;
    std::optional<double> resolution, split_ratio, learning_rate;
    std::optional<std::size_t> epochs, batch_size;
    std::optional<std::uint64_t> seed;
};

cgf::CliConfig resolve(const Overrides& o) {
    cgf::CliConfig c = o.config.empty() ? cgf::CliConfig{} : cgf::load_cli_config(o.config);
    if (const char* env = std::getenv("CGF_SEED"); env && *env) cgf::apply_seed(c, cgf::parse_seed(env));
    if (o.seed) cgf::apply_seed(c, *o.seed);
    if (o.data) c.data = *o.data;
    if (o.out) c.out = *o.out;
    if (o.min_year) c.min_year = *o.min_year;
    if (o.max_year) c.max_year = *o.max_year;
    if (o.resolution) c.dataset.resolution = *o.resolution;
    if (o.split_ratio) c.dataset.split_ratio = *o.split_ratio;
    if (o.learning_rate) c.train.learning_rate = *o.learning_rate;
    if (o.epochs) c.train.epochs = *o.epochs;
    if (o.batch_size) c.train.batch_size = *o.batch_size;
    c.validate();
    return c;
}

void write_json(const fs::path& path, const json& j) { cgf::io::write_text_file(path.string(), j.dump(2) + "\n"); }

fs::path dataset_beside(const fs::path& checkpoint) {
    return checkpoint.has_parent_path() ? checkpoint.parent_path() / "dataset.cgf" : fs::path("dataset.cgf");
}

int cmd_ingest(const cgf::CliConfig& c) {
    const auto text = cgf::io::read_text_file(c.data);
    const auto raw = cgf::hurdat::parse_hurdat2(text);
    const auto filtered = cgf::hurdat::filter_tracks(raw, c.min_year, c.max_year);
    const auto ds = cgf::data::prepare_dataset(filtered, c.dataset);
    const auto sets = cgf::data::window_sets(ds);

    fs::create_directories(c.out);
    cgf::data::write_dataset(ds, fs::path(c.out) / "dataset.cgf");

    const auto raw_summary = cgf::hurdat::dataset_summary(raw);
    json summary = ds.summary;
    summary["source"] = c.data;
    summary["raw"] = {{"storms", raw_summary.storms}, {"points", raw_summary.points}};
    summary["grid"] = ds.grid;
    summary["windows"] = {{"train", sets.train.size()}, {"test", sets.test.size()}};
    summary["max_step_miles"] = ds.max_step_miles;
    summary["stationary_steps"] = ds.stationary_steps;
    write_json(fs::path(c.out) / "summary.json", summary);
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_train(const cgf::CliConfig& c, const std::string& dataset_path) {
    const fs::path cache = dataset_path.empty() ? fs::path(c.out) / "dataset.cgf" : fs::path(dataset_path);
    const auto ds = cgf::data::read_dataset(cache);
    if (ds.options.window != c.model.seq_len) {
        throw cgf::ConfigError("dataset window " + std::to_string(ds.options.window) + " differs from model seq_len " +
                               std::to_string(c.model.seq_len));
    }
    const auto sets = cgf::data::window_sets(ds);
    fs::create_directories(c.out);

    std::ofstream log(fs::path(c.out) / "train_log.jsonl");
    if (!log) throw cgf::InputError("cannot open " + (fs::path(c.out) / "train_log.jsonl").string());
    const auto on_epoch = [&](const cgf::train::EpochRecord& r) {
        log << json{{"epoch", r.epoch}, {"train_mse", r.train_mse}, {"wall_ms", r.wall_ms}}.dump() << "\n";
        log.flush();
        if (r.epoch == 1 || r.epoch % 10 == 0 || r.epoch == c.train.epochs) {
            std::cout << "epoch " << r.epoch << "  train_mse " << r.train_mse << "  (" << r.wall_ms << " ms)\n";
        }
        return true;
    };

    cgf::train::TrainResult result;
    try {
        result = cgf::train::train(c.model, sets.train, c.train, on_epoch);
    } catch (const cgf::train::DivergenceError& e) {
        cgf::train::Checkpoint partial{c.model, c.train, ds.normalizer, ds.grid, e.last_good(),
                                       {{"diverged_in_epoch", e.epoch()}, {"max_step_miles", ds.max_step_miles}}};
        cgf::train::save_checkpoint(partial, fs::path(c.out) / "checkpoint.diverged.cgf");
        throw;
    }

    cgf::train::Checkpoint ck{c.model, c.train, ds.normalizer, ds.grid, result.params,
                              {{"epochs_run", result.loss_curve.size()},
                               {"final_train_mse", result.loss_curve.back()},
                               {"train_windows", sets.train.size()},
                               {"test_windows", sets.test.size()},
                               {"max_step_miles", ds.max_step_miles}}};
    cgf::train::save_checkpoint(ck, fs::path(c.out) / "checkpoint.cgf");
    std::cout << "wrote " << (fs::path(c.out) / "checkpoint.cgf").string() << "\n";
    return 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& dataset_path, const std::string& out) {
    const auto ck = cgf::train::load_checkpoint(checkpoint_path);
    const fs::path cache = dataset_path.empty() ? dataset_beside(checkpoint_path) : fs::path(dataset_path);
    const auto ds = cgf::data::read_dataset(cache);
    if (!(ds.grid == ck.grid) || !(ds.normalizer == ck.normalizer)) {
        throw cgf::ConfigError("dataset " + cache.string() + " was not the one this checkpoint was trained on");
    }
    const auto sets = cgf::data::window_sets(ds);
    const cgf::model::Model model(ck.model_config, ck.params);
    const auto test = cgf::train::evaluate(model, sets.test, ck.normalizer, ck.grid);
    const auto train = cgf::train::evaluate(model, sets.train, ck.normalizer, ck.grid);

    json metrics = test;
    metrics["baseline_accuracy"] = cgf::forecast::persistence_accuracy(ck.grid, sets.test);
    metrics["clamped_inputs"] = sets.clamped;
    metrics["train"] = train;
    const fs::path dir = out.empty() ? fs::path(checkpoint_path).parent_path() : fs::path(out);
    if (!dir.empty()) fs::create_directories(dir);
    write_json(dir / "metrics.json", metrics);
    std::cout << metrics.dump(2) << "\n";
    return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& dataset_path, const std::string& storm_id,
                std::size_t steps, std::size_t start, const std::string& format_name, const std::string& out) {
    const auto format = cgf::forecast::parse_format(format_name);
    const auto ck = cgf::train::load_checkpoint(checkpoint_path);
    const fs::path cache = dataset_path.empty() ? dataset_beside(checkpoint_path) : fs::path(dataset_path);
    const auto ds = cgf::data::read_dataset(cache);

    const auto* storm = ds.find(storm_id);
    if (!storm) {
        std::string ids;
        for (const auto& s : ds.storms) ids += (ids.empty() ? "" : " ") + s.id;
        throw cgf::InputError("unknown storm id " + storm_id + "; available: " + ids);
    }
    const std::size_t window = ck.model_config.seq_len;
    if (start + window > storm->steps.size()) {
        throw cgf::InputError(storm_id + " has " + std::to_string(storm->steps.size()) + " steps; a history of " +
                              std::to_string(window) + " from step " + std::to_string(start) + " does not fit");
    }
    const auto predictor = cgf::forecast::Predictor::from_checkpoint(ck);
    const std::span<const cgf::data::StepFeatures> history(storm->steps.data() + start, window);
    auto traj = cgf::forecast::rollout(predictor, history, steps);
    traj.storm_id = storm->id;
    traj.observed = storm->positions;

    const fs::path dir = out.empty() ? fs::path(checkpoint_path).parent_path() : fs::path(out);
    if (!dir.empty()) fs::create_directories(dir);
    const fs::path file = dir / (format == cgf::forecast::ExportFormat::geojson ? "trajectory.geojson" : "trajectory.csv");
    cgf::forecast::export_trajectory(traj, format, file);
    std::cout << "wrote " << file.string() << " (" << traj.forecast.size() << " forecast steps)\n";
    return 0;
}

void add_pipeline_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--seed", o.seed, "Seed for split, initialization and batch order");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grid-cell tropical cyclone track forecaster"};
    app.require_subcommand(1);

    Overrides o;
    std::string dataset, checkpoint, storm_id, format = "geojson", eval_out;
    std::size_t steps = 8, start = 0;

    auto* ingest = app.add_subcommand("ingest", "Parse and filter HURDAT2, build the windowed dataset cache");
    add_pipeline_flags(ingest, o);
    ingest->add_option("--data", o.data, "HURDAT2 text file");
    ingest->add_option("--min-year", o.min_year);
    ingest->add_option("--max-year", o.max_year);
    ingest->add_option("--resolution", o.resolution, "Grid cell size in degrees");
    ingest->add_option("--split-ratio", o.split_ratio, "Fraction of windows for training");

    auto* train = app.add_subcommand("train", "Train the model on a dataset cache");
    add_pipeline_flags(train, o);
    train->add_option("--dataset", dataset, "Dataset cache (default OUT/dataset.cgf)");
    train->add_option("--epochs", o.epochs);
    train->add_option("--batch-size", o.batch_size);
    train->add_option("--lr", o.learning_rate, "Adam learning rate");

    auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on its test split");
    evaluate->add_option("--checkpoint", checkpoint)->required();
    evaluate->add_option("--dataset", dataset, "Dataset cache (default: next to the checkpoint)");
    evaluate->add_option("--out", eval_out, "Directory for metrics.json (default: the checkpoint's)");

    auto* predict = app.add_subcommand("predict", "Roll out a forecast for one storm");
    predict->add_option("--checkpoint", checkpoint)->required();
    predict->add_option("--storm-id", storm_id)->required();
    predict->add_option("--steps", steps, "6-hour steps to forecast")->check(CLI::PositiveNumber);
    predict->add_option("--start", start, "First history step of the storm to condition on");
    predict->add_option("--format", format)->check(CLI::IsMember({"geojson", "csv"}));
    predict->add_option("--dataset", dataset, "Dataset cache (default: next to the checkpoint)");
    predict->add_option("--out", eval_out, "Output directory (default: the checkpoint's)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (*ingest) return cmd_ingest(resolve(o));
        if (*train) return cmd_train(resolve(o), dataset);
        if (*evaluate) return cmd_evaluate(checkpoint, dataset, eval_out);
        if (*predict) return cmd_predict(checkpoint, dataset, storm_id, steps, start, format, eval_out);
    } catch (const cgf::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const cgf::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
