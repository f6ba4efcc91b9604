#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "cgf/dataset.hpp"
#include "cgf/error.hpp"
#include "cgf/geo.hpp"
#include "cgf/model.hpp"

namespace cgf::train {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 1234;
    bool shuffle = true;

    void validate() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// First/second moments per ModelParams entry.
struct AdamState {
    std::vector<nn::Tensor> m;
    std::vector<nn::Tensor> v;
    std::uint64_t step = 0;

    static AdamState zeros_like(const model::ModelParams& params);
};

/// One bias-corrected Adam update. `grads` has one tensor per params entry;
/// frozen entries are skipped. Throws ShapeError on misaligned shapes and
/// NumericError on a non-finite gradient (before touching anything).
void adam_step(model::ModelParams& params, std::span<const nn::Tensor> grads, AdamState& state,
               const TrainConfig& config, double learning_rate);

/// MSE of the model over `batch` and its gradient for every params entry.
double loss_and_gradients(const model::Model& model, std::span<const data::WindowSample* const> batch,
                          std::vector<nn::Tensor>& grads);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_mse = 0.0;
    double wall_ms = 0.0;
};

/// Called after every epoch; returning false ends training early.
using EpochCallback = std::function<bool(const EpochRecord&)>;

struct TrainResult {
    model::ModelParams params;
    std::vector<double> loss_curve;  // mean training MSE per epoch
    std::uint64_t steps = 0;
};

/// Thrown when the loss or a gradient becomes non-finite. Carries the
/// parameters as they were at the end of the last completed epoch.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, model::ModelParams last_good, std::size_t epoch)
        : NumericError(what), last_good_(std::move(last_good)), epoch_(epoch) {}

    const model::ModelParams& last_good() const { return last_good_; }
    std::size_t epoch() const { return epoch_; }

private:
    model::ModelParams last_good_;
    std::size_t epoch_;
};

/// Shuffled minibatch Adam on MSE, starting from init_params(model_config).
TrainResult train(const model::ModelConfig& model_config, std::span<const data::WindowSample> train_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Same, continuing from given parameters.
TrainResult train_from(model::Model model, std::span<const data::WindowSample> train_set, const TrainConfig& config,
                       const EpochCallback& on_epoch = {});

struct Metrics {
    double mse = 0.0;  // normalized units
    double accuracy = 0.0;
    double accuracy_within_1 = 0.0;
    std::size_t count = 0;

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Normalized model outputs for every sample, in order.
std::vector<double> predict_normalized(const model::Model& model, std::span<const data::WindowSample> samples);

/// Score normalized predictions: exact and within-one-id matches of the
/// rounded, denormalized prediction against raw_label.
Metrics score(std::span<const double> predictions, std::span<const data::WindowSample> samples,
              const data::Normalizer& normalizer);

Metrics evaluate(const model::Model& model, std::span<const data::WindowSample> test,
                 const data::Normalizer& normalizer, const geo::GridSpec& grid);

// ---------------------------------------------------------------------------

struct Checkpoint {
    model::ModelConfig model_config;
    TrainConfig train_config;
    data::Normalizer normalizer;
    geo::GridSpec grid;
    model::ModelParams params;
    nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "CGFC" | u32 version | u64 manifest bytes | JSON manifest | f64 arrays in
/// manifest order | u32 CRC-32 of everything before it.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws FormatError on bad magic, version, truncation or checksum, and
/// ConfigError if `expected` is given and differs from the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path, const model::ModelConfig* expected = nullptr);

}  // namespace cgf::train
