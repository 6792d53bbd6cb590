#pragma once

#include "json.hpp"
#include "nifm/model.hpp"

namespace nifm {

nlohmann::json model_spec_to_json(const ModelSpec& spec);
// Missing keys keep their defaults; unknown keys raise ConfigError.
ModelSpec model_spec_from_json(const nlohmann::json& j);

}  // namespace nifm
