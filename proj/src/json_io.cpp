#include "nifm/json_io.hpp"

#include <set>

#include "nifm/error.hpp"

namespace nifm {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace

nlohmann::json model_spec_to_json(const ModelSpec& spec) {
  return {
      {"stage_channels", spec.encoder.stage_channels},
      {"blocks_per_stage", spec.encoder.blocks_per_stage},
      {"input_channels", spec.encoder.input_channels},
      {"nifm_variant", to_string(spec.encoder.nifm_variant)},
      {"decoder", to_string(spec.decoder.kind)},
      {"decoder_width", spec.decoder.width},
      {"seed", spec.seed},
  };
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"stage_channels", "blocks_per_stage", "input_channels", "nifm_variant", "decoder", "decoder_width",
                  "seed"},
                 "model spec");
  ModelSpec spec;
  try {
    if (j.contains("stage_channels")) spec.encoder.stage_channels = j["stage_channels"].get<std::vector<std::size_t>>();
    if (j.contains("blocks_per_stage")) spec.encoder.blocks_per_stage = j["blocks_per_stage"].get<std::size_t>();
    if (j.contains("input_channels")) spec.encoder.input_channels = j["input_channels"].get<std::size_t>();
    if (j.contains("nifm_variant")) spec.encoder.nifm_variant = parse_variant(j["nifm_variant"].get<std::string>());
    if (j.contains("decoder")) spec.decoder.kind = parse_decoder_kind(j["decoder"].get<std::string>());
    if (j.contains("decoder_width")) spec.decoder.width = j["decoder_width"].get<std::size_t>();
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
  spec.encoder.validate();
  return spec;
}

}  // namespace nifm
