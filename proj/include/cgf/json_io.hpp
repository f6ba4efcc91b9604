#pragma once

// nlohmann::json conversions for the types that travel in sidecars,
// checkpoints and CLI output.

#include <json.hpp>

#include "cgf/dataset.hpp"
#include "cgf/geo.hpp"
#include "cgf/hurdat.hpp"
#include "cgf/model.hpp"
#include "cgf/trainer.hpp"

namespace cgf::geo {
void to_json(nlohmann::json& j, const GridSpec& g);
void from_json(const nlohmann::json& j, GridSpec& g);
}  // namespace cgf::geo

namespace cgf::hurdat {
void to_json(nlohmann::json& j, const DatasetSummary& s);
void from_json(const nlohmann::json& j, DatasetSummary& s);
}  // namespace cgf::hurdat

namespace cgf::data {
void to_json(nlohmann::json& j, const FeatureRange& r);
void from_json(const nlohmann::json& j, FeatureRange& r);
void to_json(nlohmann::json& j, const Normalizer& n);
void from_json(const nlohmann::json& j, Normalizer& n);
void to_json(nlohmann::json& j, const PrepareOptions& o);
void from_json(const nlohmann::json& j, PrepareOptions& o);
}  // namespace cgf::data

namespace cgf::model {
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
}  // namespace cgf::model

namespace cgf::train {
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const Metrics& m);
}  // namespace cgf::train
