#include "nifm/config.hpp"

#include <fstream>
#include <set>

#include "nifm/error.hpp"
#include "nifm/json_io.hpp"

namespace nifm {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

// Runs `body`, turning JSON type errors into ConfigError tagged with `where`.
template <typename F>
auto guarded(const std::string& where, F body) {
  try {
    return body();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

std::string ssim_mode_name(SsimMode m) { return m == SsimMode::Global ? "global" : "windowed"; }

SsimMode parse_ssim_mode(const std::string& s) {
  if (s == "global") return SsimMode::Global;
  if (s == "windowed") return SsimMode::Windowed;
  throw ConfigError("unknown ssim_mode '" + s + "' (expected global or windowed)");
}

std::string shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::Ellipse:
      return "ellipse";
    case ShapeKind::Rectangle:
      return "rectangle";
    case ShapeKind::Blob:
      return "blob";
  }
  return "ellipse";
}

ShapeKind parse_shape(const std::string& s) {
  for (auto k : {ShapeKind::Ellipse, ShapeKind::Rectangle, ShapeKind::Blob})
    if (shape_name(k) == s) return k;
  throw ConfigError("unknown shape '" + s + "' (expected ellipse, rectangle or blob)");
}

json scene_to_json(const SceneSpec& s) {
  std::vector<std::string> shapes;
  for (auto k : s.shapes) shapes.push_back(shape_name(k));
  return {{"min_objects", s.min_objects},
          {"max_objects", s.max_objects},
          {"texture_amplitude", s.texture_amplitude},
          {"texture_frequency", s.texture_frequency},
          {"shapes", shapes}};
}

SceneSpec scene_from_json(const json& j) {
  reject_unknown(j, {"min_objects", "max_objects", "texture_amplitude", "texture_frequency", "shapes"}, "scene");
  SceneSpec s;
  read(j, "min_objects", s.min_objects);
  read(j, "max_objects", s.max_objects);
  read(j, "texture_amplitude", s.texture_amplitude);
  read(j, "texture_frequency", s.texture_frequency);
  if (j.contains("shapes")) {
    s.shapes.clear();
    for (const auto& name : j.at("shapes").get<std::vector<std::string>>()) s.shapes.push_back(parse_shape(name));
  }
  return s;
}

json weather_to_json(const WeatherParams& w) {
  return {{"rain_streaks", w.rain_streaks},       {"rain_angle_deg", w.rain_angle_deg},
          {"rain_length", w.rain_length},         {"rain_intensity", w.rain_intensity},
          {"snow_density", w.snow_density},       {"snow_min_radius", w.snow_min_radius},
          {"snow_max_radius", w.snow_max_radius}, {"snow_intensity", w.snow_intensity},
          {"fog_alpha", w.fog_alpha},             {"fog_white", w.fog_white},
          {"light_gain", w.light_gain},           {"dark_gain", w.dark_gain}};
}

WeatherParams weather_from_json(const json& j) {
  WeatherParams w;
  std::set<std::string> known;
  const json defaults = weather_to_json(w);
  for (const auto& [key, _] : defaults.items()) known.insert(key);
  reject_unknown(j, known, "weather");
  read(j, "rain_streaks", w.rain_streaks);
  read(j, "rain_angle_deg", w.rain_angle_deg);
  read(j, "rain_length", w.rain_length);
  read(j, "rain_intensity", w.rain_intensity);
  read(j, "snow_density", w.snow_density);
  read(j, "snow_min_radius", w.snow_min_radius);
  read(j, "snow_max_radius", w.snow_max_radius);
  read(j, "snow_intensity", w.snow_intensity);
  read(j, "fog_alpha", w.fog_alpha);
  read(j, "fog_white", w.fog_white);
  read(j, "light_gain", w.light_gain);
  read(j, "dark_gain", w.dark_gain);
  return w;
}

}  // namespace

json loss_config_to_json(const LossConfig& c) {
  return {{"ssim_c1", c.ssim_c1},     {"ssim_c2", c.ssim_c2},         {"eps_clamp", c.eps_clamp},
          {"iou_eps", c.iou_eps},     {"ssim_mode", ssim_mode_name(c.ssim_mode)},
          {"window_size", c.window_size}, {"window_sigma", c.window_sigma}};
}

LossConfig loss_config_from_json(const json& j) {
  return guarded("loss", [&] {
    reject_unknown(j, {"ssim_c1", "ssim_c2", "eps_clamp", "iou_eps", "ssim_mode", "window_size", "window_sigma"},
                   "loss");
    LossConfig c;
    read(j, "ssim_c1", c.ssim_c1);
    read(j, "ssim_c2", c.ssim_c2);
    read(j, "eps_clamp", c.eps_clamp);
    read(j, "iou_eps", c.iou_eps);
    if (j.contains("ssim_mode")) c.ssim_mode = parse_ssim_mode(j.at("ssim_mode").get<std::string>());
    read(j, "window_size", c.window_size);
    read(j, "window_sigma", c.window_sigma);
    c.validate();
    return c;
  });
}

json adam_config_to_json(const AdamConfig& c) {
  return {{"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps},
          {"base_lr", c.base_lr}, {"gamma", c.gamma}, {"step_epochs", c.step_epochs}};
}

AdamConfig adam_config_from_json(const json& j) {
  return guarded("adam", [&] {
    reject_unknown(j, {"beta1", "beta2", "eps", "base_lr", "gamma", "step_epochs"}, "adam");
    AdamConfig c;
    read(j, "beta1", c.beta1);
    read(j, "beta2", c.beta2);
    read(j, "eps", c.eps);
    read(j, "base_lr", c.base_lr);
    read(j, "gamma", c.gamma);
    read(j, "step_epochs", c.step_epochs);
    c.validate();
    return c;
  });
}

json train_config_to_json(const TrainConfig& c) {
  json model = model_spec_to_json(c.model);
  model.erase("seed");
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"image_size", c.image_size},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"model", model},
          {"loss", loss_config_to_json(c.loss)},
          {"adam", adam_config_to_json(c.adam)}};
}

TrainConfig train_config_from_json(const json& j) {
  return guarded("train", [&] {
    reject_unknown(j, {"epochs", "batch_size", "image_size", "seed", "checkpoint_every", "model", "loss", "adam"},
                   "train");
    TrainConfig c;
    read(j, "epochs", c.epochs);
    read(j, "batch_size", c.batch_size);
    read(j, "image_size", c.image_size);
    read(j, "seed", c.seed);
    read(j, "checkpoint_every", c.checkpoint_every);
    if (j.contains("model")) {
      if (j.at("model").contains("seed")) throw ConfigError("model.seed is not configurable; set train seed instead");
      c.model = model_spec_from_json(j.at("model"));
    }
    if (j.contains("loss")) c.loss = loss_config_from_json(j.at("loss"));
    if (j.contains("adam")) c.adam = adam_config_from_json(j.at("adam"));
    c.model.seed = c.seed;
    c.validate();
    return c;
  });
}

json dataset_config_to_json(const DatasetConfig& c) {
  return {{"train_counts", c.train_counts},
          {"test_counts", c.test_counts},
          {"image_size", c.image_size},
          {"seed", c.seed},
          {"scene", scene_to_json(c.scene)},
          {"weather", weather_to_json(c.weather)}};
}

DatasetConfig dataset_config_from_json(const json& j) {
  return guarded("dataset", [&] {
    reject_unknown(j, {"train_counts", "test_counts", "image_size", "seed", "scene", "weather"}, "dataset");
    DatasetConfig c = DatasetConfig::desk_default();
    read(j, "train_counts", c.train_counts);
    read(j, "test_counts", c.test_counts);
    read(j, "image_size", c.image_size);
    read(j, "seed", c.seed);
    if (j.contains("scene")) c.scene = scene_from_json(j.at("scene"));
    if (j.contains("weather")) c.weather = weather_from_json(j.at("weather"));
    c.validate();
    return c;
  });
}

json experiment_file_to_json(const ExperimentFile& c) {
  std::vector<std::string> variants, decoders;
  for (auto v : c.experiment.variants) variants.push_back(to_string(v));
  for (auto d : c.experiment.decoders) decoders.push_back(to_string(d));
  return {{"train", train_config_to_json(c.experiment.train)},
          {"dataset", dataset_config_to_json(c.dataset)},
          {"variants", variants},
          {"decoders", decoders},
          {"seeds", c.experiment.seeds}};
}

ExperimentFile experiment_file_from_json(const json& j) {
  return guarded("experiment", [&] {
    reject_unknown(j, {"train", "dataset", "variants", "decoders", "seeds"}, "experiment");
    ExperimentFile c;
    if (j.contains("train")) c.experiment.train = train_config_from_json(j.at("train"));
    if (j.contains("dataset")) c.dataset = dataset_config_from_json(j.at("dataset"));
    if (j.contains("variants")) {
      c.experiment.variants.clear();
      for (const auto& v : j.at("variants").get<std::vector<std::string>>())
        c.experiment.variants.push_back(parse_variant(v));
    }
    if (j.contains("decoders")) {
      c.experiment.decoders.clear();
      for (const auto& d : j.at("decoders").get<std::vector<std::string>>())
        c.experiment.decoders.push_back(parse_decoder_kind(d));
    }
    read(j, "seeds", c.experiment.seeds);
    if (c.experiment.seeds.empty()) throw ConfigError("experiment needs at least one seed");
    if (c.experiment.decoders.empty()) throw ConfigError("experiment needs at least one decoder");
    return c;
  });
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config", path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);

  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown key '" + key + "' in override");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json value = json::parse(text, nullptr, false);
  *node = value.is_discarded() ? json(text) : value;
}

}  // namespace nifm
