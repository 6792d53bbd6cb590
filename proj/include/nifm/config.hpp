#pragma once

// JSON forms of the run configurations. Reading starts from the defaults, so
// a file only needs the keys it changes; unknown keys raise ConfigError.

#include <filesystem>
#include <string>

#include "json.hpp"
#include "nifm/dataset.hpp"
#include "nifm/training.hpp"

namespace nifm {

nlohmann::json loss_config_to_json(const LossConfig& c);
LossConfig loss_config_from_json(const nlohmann::json& j);

nlohmann::json adam_config_to_json(const AdamConfig& c);
AdamConfig adam_config_from_json(const nlohmann::json& j);

// The model section carries no seed; training sets it from "seed".
nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json dataset_config_to_json(const DatasetConfig& c);
// Defaults to DatasetConfig::desk_default().
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

// An experiment run: the training grid plus the data it is generated from.
struct ExperimentFile {
  ExperimentConfig experiment;
  DatasetConfig dataset = DatasetConfig::desk_default();
};

nlohmann::json experiment_file_to_json(const ExperimentFile& c);
ExperimentFile experiment_file_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);

// Applies "a.b.c=value" to `root`. The key path must already exist; the value
// is parsed as JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& root, const std::string& assignment);

}  // namespace nifm
