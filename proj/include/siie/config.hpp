#pragma once

#include <filesystem>

#include "json.hpp"

#include "siie/networks.hpp"
#include "siie/training.hpp"

namespace siie {

/*
 * JSON forms of the configuration structs. Keys use snake_case field
 * names; a config file may hold "model" and "train" objects with any
 * subset of keys. Unknown keys are rejected.
 */
nlohmann::json toJson(const HistogramConfig &config);
nlohmann::json toJson(const NetworkConfig &config);
nlohmann::json toJson(const ModelConfig &config);
nlohmann::json toJson(const TrainConfig &config);

/* Applies the keys present in `json` on top of `base`. */
HistogramConfig applyJson(HistogramConfig base, const nlohmann::json &json);
NetworkConfig applyJson(NetworkConfig base, const nlohmann::json &json);
ModelConfig applyJson(ModelConfig base, const nlohmann::json &json);
TrainConfig applyJson(TrainConfig base, const nlohmann::json &json);

struct RunConfig {
	ModelConfig model;
	TrainConfig train;
};

RunConfig loadRunConfig(const std::filesystem::path &path, RunConfig base = {});
nlohmann::json toJson(const RunConfig &config);

} // namespace siie
