#include "cgf/json_io.hpp"

#include "cgf/error.hpp"

namespace cgf::geo {

void to_json(nlohmann::json& j, const GridSpec& g) {
    j = {{"lon_min", g.lon_min}, {"lon_max", g.lon_max}, {"lat_min", g.lat_min},
         {"lat_max", g.lat_max}, {"resolution", g.resolution}, {"cell_count", g.cell_count()}};
}

void from_json(const nlohmann::json& j, GridSpec& g) {
    j.at("lon_min").get_to(g.lon_min);
    j.at("lon_max").get_to(g.lon_max);
    j.at("lat_min").get_to(g.lat_min);
    j.at("lat_max").get_to(g.lat_max);
    j.at("resolution").get_to(g.resolution);
    g.validate();
}

}  // namespace cgf::geo

namespace cgf::hurdat {

void to_json(nlohmann::json& j, const DatasetSummary& s) {
    j = {{"storms", s.storms},
         {"points", s.points},
         {"years", {s.min_year, s.max_year}},
         {"max_len", s.max_track_length}};
}

void from_json(const nlohmann::json& j, DatasetSummary& s) {
    j.at("storms").get_to(s.storms);
    j.at("points").get_to(s.points);
    s.min_year = j.at("years").at(0).get<int>();
    s.max_year = j.at("years").at(1).get<int>();
    j.at("max_len").get_to(s.max_track_length);
}

}  // namespace cgf::hurdat

namespace cgf::data {

void to_json(nlohmann::json& j, const FeatureRange& r) { j = {r.min, r.max}; }

void from_json(const nlohmann::json& j, FeatureRange& r) {
    r.min = j.at(0).get<double>();
    r.max = j.at(1).get<double>();
    if (!(r.max > r.min)) throw FormatError("feature range must have max > min");
}

void to_json(nlohmann::json& j, const Normalizer& n) {
    j = nlohmann::json::object();
    for (std::size_t f = 0; f < kFeatureCount; ++f) j[std::string(feature_name(f))] = n.features[f];
    j["label"] = n.label;
}

void from_json(const nlohmann::json& j, Normalizer& n) {
    for (std::size_t f = 0; f < kFeatureCount; ++f) j.at(std::string(feature_name(f))).get_to(n.features[f]);
    j.at("label").get_to(n.label);
}

void to_json(nlohmann::json& j, const PrepareOptions& o) {
    j = {{"resolution", o.resolution},
         {"window", o.window},
         {"pad_length", o.pad_length},
         {"split_ratio", o.split_ratio},
         {"seed", o.seed}};
}

void from_json(const nlohmann::json& j, PrepareOptions& o) {
    o.resolution = j.value("resolution", o.resolution);
    o.window = j.value("window", o.window);
    o.pad_length = j.value("pad_length", o.pad_length);
    o.split_ratio = j.value("split_ratio", o.split_ratio);
    o.seed = j.value("seed", o.seed);
}

}  // namespace cgf::data

namespace cgf::model {

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"seq_len", c.seq_len},       {"in_features", c.in_features}, {"d_model", c.d_model},
         {"n_heads", c.n_heads},       {"n_layers", c.n_layers},       {"ffn_hidden", c.ffn_hidden},
         {"head_hidden", c.head_hidden}, {"use_layer_norm", c.use_layer_norm}, {"seed", c.seed}};
}

// Missing keys keep their defaults so config files only list overrides.
void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.seq_len = j.value("seq_len", c.seq_len);
    c.in_features = j.value("in_features", c.in_features);
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.use_layer_norm = j.value("use_layer_norm", c.use_layer_norm);
    c.seed = j.value("seed", c.seed);
}

}  // namespace cgf::model

namespace cgf::train {

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
         {"beta1", c.beta1},   {"beta2", c.beta2},           {"epsilon", c.epsilon},
         {"seed", c.seed},     {"shuffle", c.shuffle}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.seed = j.value("seed", c.seed);
    c.shuffle = j.value("shuffle", c.shuffle);
}

void to_json(nlohmann::json& j, const Metrics& m) {
    j = {{"mse", m.mse}, {"accuracy", m.accuracy}, {"accuracy_within_1", m.accuracy_within_1}, {"count", m.count}};
}

}  // namespace cgf::train
