#include "cgf/trainer.hpp"

#include <chrono>
#include <cmath>
#include <algorithm>
#include <cstring>
#include <exception>

#include "cgf/binary_io.hpp"
#include "cgf/json_io.hpp"
#include "cgf/random.hpp"

namespace cgf::train {
namespace {

constexpr char kMagic[4] = {'C', 'G', 'F', 'C'};
constexpr std::size_t kEvalChunk = 256;

using nn::Tensor;

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw ConfigError("Adam betas must lie in (0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

AdamState AdamState::zeros_like(const model::ModelParams& params) {
    AdamState s;
    for (const auto& e : params.entries) {
        s.m.emplace_back(e.value.shape(), 0.0);
        s.v.emplace_back(e.value.shape(), 0.0);
    }
    return s;
}

void adam_step(model::ModelParams& params, std::span<const Tensor> grads, AdamState& state, const TrainConfig& config,
               double learning_rate) {
    const std::size_t n = params.entries.size();
    if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
        throw ShapeError("adam_step: parameter, gradient and state counts differ");
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& shape = params.entries[i].value.shape();
        if (grads[i].shape() != shape || state.m[i].shape() != shape || state.v[i].shape() != shape) {
            throw ShapeError("adam_step: shape mismatch for " + params.entries[i].name);
        }
        if (params.entries[i].trainable && !grads[i].all_finite()) {
            throw NumericError("non-finite gradient for " + params.entries[i].name);
        }
    }

    ++state.step;
    const auto t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < n; ++i) {
        auto& entry = params.entries[i];
        if (!entry.trainable) continue;
        auto p = entry.value.values();
        auto m = state.m[i].values();
        auto v = state.v[i].values();
        const auto g = grads[i].values();
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            const double m_hat = m[j] / correction1;
            const double v_hat = v[j] / correction2;
            p[j] -= learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

double loss_and_gradients(const model::Model& model, std::span<const data::WindowSample* const> batch,
                          std::vector<Tensor>& grads) {
    const auto& cfg = model.config();
    const std::size_t per_window = cfg.seq_len * cfg.in_features;
    if (batch.empty()) throw InputError("empty batch");
    std::vector<double> inputs;
    std::vector<double> targets;
    inputs.reserve(batch.size() * per_window);
    for (const auto* s : batch) {
        if (s->inputs.size() != per_window) {
            throw ShapeError("sample has " + std::to_string(s->inputs.size()) + " inputs, model expects " +
                             std::to_string(per_window));
        }
        inputs.insert(inputs.end(), s->inputs.begin(), s->inputs.end());
        targets.push_back(s->label);
    }

    nn::Tape tape;
    const auto bound = model::bind(tape, cfg, model.params(), true);
    const auto x = tape.constant(Tensor({batch.size() * cfg.seq_len, cfg.in_features}, std::move(inputs)));
    const auto y = tape.constant(Tensor({batch.size(), 1}, std::move(targets)));
    const auto pred = model::forward_graph(cfg, bound, x);
    const auto loss = nn::mse_loss(pred, y);
    tape.backward(loss);

    grads.clear();
    for (const auto& v : bound.vars) grads.push_back(tape.grad(v));
    return loss.value()[0];
}

TrainResult train(const model::ModelConfig& model_config, std::span<const data::WindowSample> train_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    return train_from(model::Model(model_config), train_set, config, on_epoch);
}

TrainResult train_from(model::Model model, std::span<const data::WindowSample> train_set, const TrainConfig& config,
                       const EpochCallback& on_epoch) {
    config.validate();
    if (train_set.empty()) throw InputError("training set is empty");

    AdamState state = AdamState::zeros_like(model.params());
    Rng rng(config.seed);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    model::ModelParams last_good = model.params();
    std::vector<Tensor> grads;
    std::vector<const data::WindowSample*> batch;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        if (config.shuffle) rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
            batch.clear();
            for (std::size_t i = b; i < std::min(order.size(), b + config.batch_size); ++i) {
                batch.push_back(&train_set[order[i]]);
            }
            double loss = 0.0;
            try {
                loss = loss_and_gradients(model, batch, grads);
                if (!std::isfinite(loss)) throw NumericError("training loss is not finite");
                adam_step(model.params(), grads, state, config, config.learning_rate);
            } catch (const NumericError& e) {
                throw DivergenceError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what(),
                                      std::move(last_good), epoch);
            }
            loss_sum += loss * static_cast<double>(batch.size());
            ++result.steps;
        }
        const double mean_loss = loss_sum / static_cast<double>(order.size());
        result.loss_curve.push_back(mean_loss);
        last_good = model.params();

        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (on_epoch && !on_epoch(EpochRecord{epoch, mean_loss, ms})) break;
    }
    result.params = std::move(model.params());
    return result;
}

std::vector<double> predict_normalized(const model::Model& model, std::span<const data::WindowSample> samples) {
    const auto& cfg = model.config();
    const std::size_t per_window = cfg.seq_len * cfg.in_features;
    std::vector<double> out(samples.size());
    const auto chunks = static_cast<std::int64_t>((samples.size() + kEvalChunk - 1) / kEvalChunk);
    std::exception_ptr failure;
    // Parameters are read-only here, so chunks are independent.
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t c = 0; c < chunks; ++c) {
        try {
            const std::size_t begin = static_cast<std::size_t>(c) * kEvalChunk;
            const std::size_t end = std::min(samples.size(), begin + kEvalChunk);
            std::vector<double> inputs;
            inputs.reserve((end - begin) * per_window);
            for (std::size_t i = begin; i < end; ++i) {
                inputs.insert(inputs.end(), samples[i].inputs.begin(), samples[i].inputs.end());
            }
            const auto pred = model.forward_batch(inputs, end - begin);
            std::copy(pred.begin(), pred.end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
        } catch (...) {
#pragma omp critical
            failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

Metrics score(std::span<const double> predictions, std::span<const data::WindowSample> samples,
              const data::Normalizer& normalizer) {
    if (samples.empty()) throw InputError("cannot evaluate an empty sample set");
    if (predictions.size() != samples.size()) throw ShapeError("prediction and sample counts differ");
    Metrics m;
    m.count = samples.size();
    std::size_t exact = 0, near = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double err = predictions[i] - samples[i].label;
        m.mse += err * err;
        const auto id = static_cast<std::int64_t>(std::llround(normalizer.label_inverse(predictions[i])));
        const auto diff = id - samples[i].raw_label;
        if (diff == 0) ++exact;
        if (diff >= -1 && diff <= 1) ++near;
    }
    const auto n = static_cast<double>(samples.size());
    m.mse /= n;
    m.accuracy = static_cast<double>(exact) / n;
    m.accuracy_within_1 = static_cast<double>(near) / n;
    return m;
}

Metrics evaluate(const model::Model& model, std::span<const data::WindowSample> test,
                 const data::Normalizer& normalizer, const geo::GridSpec& grid) {
    if (test.empty()) throw InputError("test set is empty");
    if (normalizer.label.min != 0.0 || normalizer.label.max != static_cast<double>(grid.cell_count() - 1)) {
        throw ConfigError("normalizer label range does not match the grid");
    }
    return score(predict_normalized(model, test), test, normalizer);
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    nlohmann::json manifest = {
        {"format", "cgf-checkpoint"},
        {"version", kCheckpointVersion},
        {"config", ck.model_config},
        {"train", ck.train_config},
        {"normalizer", ck.normalizer},
        {"grid", ck.grid},
        {"metadata", ck.metadata},
    };
    auto& listing = manifest["parameters"] = nlohmann::json::array();
    for (const auto& e : ck.params.entries) {
        listing.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"trainable", e.trainable}});
    }
    const std::string text = manifest.dump();

    io::ByteWriter w;
    w.raw(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.u64(text.size());
    w.raw(text.data(), text.size());
    for (const auto& e : ck.params.entries) w.f64s(e.value.values());
    w.append_crc();
    io::write_file(path.string(), w.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const model::ModelConfig* expected) {
    const auto bytes = io::read_file(path.string());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError(path.string() + " is not a checkpoint");
    }
    io::ByteReader r(io::checked_payload(bytes));
    char magic[4];
    r.raw(magic, 4);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint64_t manifest_len = r.u64();
    if (manifest_len > r.remaining()) throw FormatError("truncated checkpoint manifest");
    std::string text(manifest_len, '\0');
    r.raw(text.data(), manifest_len);

    Checkpoint ck;
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text);
        manifest.at("config").get_to(ck.model_config);
        manifest.at("train").get_to(ck.train_config);
        manifest.at("normalizer").get_to(ck.normalizer);
        manifest.at("grid").get_to(ck.grid);
        ck.metadata = manifest.value("metadata", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad checkpoint manifest: " + std::string(e.what()));
    }
    if (expected && !(*expected == ck.model_config)) {
        throw ConfigError("checkpoint config does not match the requested model config");
    }

    ck.params = model::init_params(ck.model_config);
    const auto& listing = manifest.at("parameters");
    if (listing.size() != ck.params.entries.size()) {
        throw ConfigError("checkpoint parameter list does not match its declared config");
    }
    for (std::size_t i = 0; i < listing.size(); ++i) {
        auto& entry = ck.params.entries[i];
        if (listing[i].at("name").get<std::string>() != entry.name ||
            listing[i].at("shape").get<std::vector<std::size_t>>() != entry.value.shape()) {
            throw ConfigError("checkpoint parameter " + listing[i].at("name").get<std::string>() +
                              " does not match its declared config");
        }
        auto values = r.f64s(entry.value.size());
        entry.value = Tensor(entry.value.shape(), std::move(values));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint");
    return ck;
}

}  // namespace cgf::train
