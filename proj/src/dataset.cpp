#include "nifm/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <set>

#include "nifm/error.hpp"
#include "nifm/random.hpp"

namespace nifm {

namespace fs = std::filesystem;

Image::Image(std::size_t c, std::size_t h, std::size_t w, double fill)
    : channels(c), height(h), width(w), data(c * h * w, fill) {}

// ---- PNG ----

std::uint8_t quantize(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

void write_png(const fs::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw DimensionError("PNG images need 1 or 3 channels", 0);
  const std::size_t hw = image.height * image.width;
  std::vector<std::uint8_t> bytes(hw * image.channels);
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t c = 0; c < image.channels; ++c) bytes[p * image.channels + c] = quantize(image.data[c * hw + p]);
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
    const std::string why = png.message;
    png_image_free(&png);
    throw IoError("cannot write PNG (" + why + ")", path.string());
  }
}

Image read_png(const fs::path& path, std::size_t channels) {
  if (channels != 1 && channels != 3) throw DimensionError("PNG images need 1 or 3 channels", 0);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw IoError("cannot read PNG (" + std::string(png.message) + ")", path.string());
  }
  png.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    const std::string why = png.message;
    png_image_free(&png);
    throw IoError("cannot decode PNG (" + why + ")", path.string());
  }
  Image image(channels, png.height, png.width);
  const std::size_t hw = image.height * image.width;
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t c = 0; c < channels; ++c) image.data[c * hw + p] = bytes[p * channels + c] / 255.0;
  }
  return image;
}

// ---- scenes ----

void SceneSpec::validate() const {
  if (image_size < 8) throw ConfigError("scene image_size must be at least 8");
  if (min_objects == 0 || min_objects > max_objects) throw ConfigError("scene needs 1 <= min_objects <= max_objects");
  if (shapes.empty()) throw ConfigError("scene needs at least one shape kind");
  if (texture_amplitude < 0.0 || texture_frequency < 1.0) throw ConfigError("invalid background texture parameters");
}

namespace {

constexpr double kPi = std::numbers::pi;

struct Placed {
  ShapeKind kind;
  double cx, cy, a, b, angle;
  double wobble1, wobble2, phase1, phase2;
  int lobes;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = std::cos(angle) * dx + std::sin(angle) * dy;
    const double v = -std::sin(angle) * dx + std::cos(angle) * dy;
    switch (kind) {
      case ShapeKind::Ellipse: return (u / a) * (u / a) + (v / b) * (v / b) <= 1.0;
      case ShapeKind::Rectangle: return std::abs(u) <= a && std::abs(v) <= b;
      case ShapeKind::Blob: {
        const double theta = std::atan2(v, u);
        const double r = a * (1.0 + wobble1 * std::sin(lobes * theta + phase1) +
                              wobble2 * std::sin((lobes + 1) * theta + phase2));
        return std::hypot(u, v) <= r;
      }
    }
    return false;
  }
};

}  // namespace

Scene render_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t s = spec.image_size;
  const double sd = static_cast<double>(s);

  std::array<double, 3> base{}, slope{};
  for (auto& v : base) v = rng.uniform(0.25, 0.75);
  for (auto& v : slope) v = rng.uniform(-0.15, 0.15);
  const double grad_dir = rng.uniform(0.0, 2.0 * kPi);
  const double tex_dir = rng.uniform(0.0, 2.0 * kPi);
  const double freq = rng.uniform(1.0, spec.texture_frequency);
  const double phase = rng.uniform(0.0, 2.0 * kPi);

  Scene scene{Image(3, s, s), Image(1, s, s)};
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      const double px = (x + 0.5) / sd, py = (y + 0.5) / sd;
      const double along = std::cos(grad_dir) * (px - 0.5) + std::sin(grad_dir) * (py - 0.5);
      const double wave = spec.texture_amplitude *
                          std::sin(2.0 * kPi * freq * (std::cos(tex_dir) * px + std::sin(tex_dir) * py) + phase);
      for (std::size_t c = 0; c < 3; ++c) scene.image.at(c, y, x) = base[c] + slope[c] * along + wave;
    }
  }

  const std::size_t count = spec.min_objects + rng.below(spec.max_objects - spec.min_objects + 1);
  for (std::size_t i = 0; i < count; ++i) {
    Placed shape{};
    shape.kind = spec.shapes[rng.below(spec.shapes.size())];
    shape.cx = rng.uniform(0.25, 0.75) * sd;
    shape.cy = rng.uniform(0.25, 0.75) * sd;
    shape.a = rng.uniform(0.10, 0.24) * sd;
    shape.b = rng.uniform(0.10, 0.24) * sd;
    shape.angle = rng.uniform(0.0, kPi);
    shape.wobble1 = rng.uniform(0.1, 0.3);
    shape.wobble2 = rng.uniform(0.0, 0.15);
    shape.phase1 = rng.uniform(0.0, 2.0 * kPi);
    shape.phase2 = rng.uniform(0.0, 2.0 * kPi);
    shape.lobes = 2 + static_cast<int>(rng.below(3));

    // Object colour sits well away from the background base colour.
    std::array<double, 3> colour{};
    for (std::size_t c = 0; c < 3; ++c) {
      const double offset = rng.uniform(0.3, 0.5);
      const bool up = rng.below(2) == 1;
      double v = base[c] + (up ? offset : -offset);
      if (v > 0.95 || v < 0.05) v = base[c] + (up ? -offset : offset);
      colour[c] = std::clamp(v, 0.0, 1.0);
    }
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        if (!shape.contains(x + 0.5, y + 0.5)) continue;
        scene.mask.at(0, y, x) = 1.0;
        for (std::size_t c = 0; c < 3; ++c) scene.image.at(c, y, x) = colour[c];
      }
    }
  }
  for (auto& v : scene.image.data) v = std::clamp(v, 0.0, 1.0);
  return scene;
}

// ---- weather ----

void WeatherParams::validate() const {
  if (rain_length <= 0.0 || rain_intensity < 0.0) throw ConfigError("invalid rain parameters");
  if (snow_density < 0.0 || snow_min_radius <= 0.0 || snow_max_radius < snow_min_radius || snow_intensity < 0.0) {
    throw ConfigError("invalid snow parameters");
  }
  if (fog_alpha < 0.0 || fog_alpha > 1.0 || fog_white < 0.0 || fog_white > 1.0) {
    throw ConfigError("fog alpha and white level must lie in [0,1]");
  }
  if (light_gain <= 1.0) throw ConfigError("light gain must exceed 1");
  if (dark_gain <= 0.0 || dark_gain >= 1.0) throw ConfigError("dark gain must lie in (0,1)");
}

std::vector<Effect> weather_effects(std::size_t class_index) {
  switch (class_index) {
    case 0: return {};
    case 1: return {Effect::Rain};
    case 2: return {Effect::Snow};
    case 3: return {Effect::Fog};
    case 4: return {Effect::Light};
    case 5: return {Effect::Dark};
    case 6: return {Effect::Rain, Effect::Snow};
    case 7: return {Effect::Rain, Effect::Fog};
    case 8: return {Effect::Snow, Effect::Fog};
  }
  throw ConfigError("noise class index " + std::to_string(class_index) + " out of range");
}

namespace {

void add_layer(Image& image, const std::vector<double>& layer) {
  const std::size_t hw = image.height * image.width;
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t p = 0; p < hw; ++p) image.data[c * hw + p] = std::min(image.data[c * hw + p] + layer[p], 1.0);
  }
}

void rain(Image& image, const WeatherParams& prm, Rng& rng) {
  const double h = static_cast<double>(image.height), w = static_cast<double>(image.width);
  std::vector<double> layer(image.height * image.width, 0.0);
  for (std::size_t i = 0; i < prm.rain_streaks; ++i) {
    const double angle = (prm.rain_angle_deg + rng.uniform(-5.0, 5.0)) * kPi / 180.0;
    const double length = prm.rain_length * rng.uniform(0.7, 1.3);
    const double x0 = rng.uniform(0.0, w), y0 = rng.uniform(-length, h);
    const double dx = std::cos(angle), dy = std::sin(angle);
    for (double t = 0.0; t <= length; t += 0.5) {
      const double x = std::floor(x0 + t * dx), y = std::floor(y0 + t * dy);
      if (x < 0 || y < 0 || x >= w || y >= h) continue;
      auto& v = layer[static_cast<std::size_t>(y) * image.width + static_cast<std::size_t>(x)];
      v = std::max(v, prm.rain_intensity);
    }
  }
  add_layer(image, layer);
}

void snow(Image& image, const WeatherParams& prm, Rng& rng) {
  const std::size_t flakes =
      static_cast<std::size_t>(std::llround(prm.snow_density * static_cast<double>(image.height * image.width)));
  std::vector<double> layer(image.height * image.width, 0.0);
  for (std::size_t i = 0; i < flakes; ++i) {
    const double cx = rng.uniform(0.0, static_cast<double>(image.width));
    const double cy = rng.uniform(0.0, static_cast<double>(image.height));
    const double r = rng.uniform(prm.snow_min_radius, prm.snow_max_radius);
    const auto y0 = static_cast<long>(std::floor(cy - r)), y1 = static_cast<long>(std::ceil(cy + r));
    const auto x0 = static_cast<long>(std::floor(cx - r)), x1 = static_cast<long>(std::ceil(cx + r));
    for (long y = std::max(0L, y0); y <= std::min<long>(y1, static_cast<long>(image.height) - 1); ++y) {
      for (long x = std::max(0L, x0); x <= std::min<long>(x1, static_cast<long>(image.width) - 1); ++x) {
        if (std::hypot(x + 0.5 - cx, y + 0.5 - cy) > r) continue;
        auto& v = layer[static_cast<std::size_t>(y) * image.width + static_cast<std::size_t>(x)];
        v = std::max(v, prm.snow_intensity);
      }
    }
  }
  add_layer(image, layer);
}

void gain(Image& image, double g) {
  for (auto& v : image.data) v = std::clamp(v * g, 0.0, 1.0);
}

}  // namespace

Image apply_weather(const Image& image, std::size_t class_index, const WeatherParams& params, std::uint64_t seed) {
  Image out = image;
  Rng rng(seed);
  for (Effect e : weather_effects(class_index)) {
    switch (e) {
      case Effect::Rain: rain(out, params, rng); break;
      case Effect::Snow: snow(out, params, rng); break;
      case Effect::Fog:
        for (auto& v : out.data) v = std::clamp((1.0 - params.fog_alpha) * v + params.fog_alpha * params.fog_white, 0.0, 1.0);
        break;
      case Effect::Light: gain(out, params.light_gain); break;
      case Effect::Dark: gain(out, params.dark_gain); break;
    }
  }
  return out;
}

// ---- manifests ----

std::array<std::size_t, kNoiseClassCount> DatasetManifest::class_counts() const {
  std::array<std::size_t, kNoiseClassCount> counts{};
  for (const auto& e : entries) counts.at(e.class_index) += 1;
  return counts;
}

DatasetManifest DatasetManifest::with_split(const std::string& split) const {
  DatasetManifest out = *this;
  out.entries.clear();
  for (const auto& e : entries) {
    if (e.split == split) out.entries.push_back(e);
  }
  return out;
}

nlohmann::json manifest_to_json(const DatasetManifest& manifest) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    entries.push_back({{"image", e.image}, {"mask", e.mask}, {"class", e.class_name}, {"split", e.split}});
  }
  return {{"seed", manifest.seed}, {"entries", entries}};
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest", path.string());
  out << manifest_to_json(manifest).dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest", path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest", path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.root = path.parent_path();
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& item : j.at("entries")) {
      DatasetEntry e;
      e.image = item.at("image").get<std::string>();
      e.mask = item.at("mask").get<std::string>();
      e.class_name = item.at("class").get<std::string>();
      e.split = item.at("split").get<std::string>();
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  const auto& table = NoiseClassTable::standard();
  for (auto& e : m.entries) {
    const auto idx = table.find(e.class_name);
    if (!idx) throw DataError("manifest " + path.string() + " names unknown class '" + e.class_name + "'");
    e.class_index = *idx;
    for (const auto& rel : {e.image, e.mask}) {
      if (!fs::exists(m.root / rel)) throw IoError("manifest references a missing file", (m.root / rel).string());
    }
  }
  return m;
}

// ---- generation ----

const std::array<std::size_t, kNoiseClassCount>& reference_train_counts() {
  static const std::array<std::size_t, kNoiseClassCount> counts{631, 1524, 1547, 1534, 1531, 1535, 1494, 1562, 1533};
  return counts;
}

std::array<std::size_t, kNoiseClassCount> apportion(std::size_t total,
                                                    const std::array<std::size_t, kNoiseClassCount>& weights) {
  const std::size_t sum = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
  if (sum == 0) throw ConfigError("apportion weights sum to zero");
  std::array<std::size_t, kNoiseClassCount> out{};
  std::array<std::size_t, kNoiseClassCount> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < kNoiseClassCount; ++i) {
    out[i] = total * weights[i] / sum;
    remainder[i] = total * weights[i] % sum;
    assigned += out[i];
  }
  std::array<std::size_t, kNoiseClassCount> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) out[order[k]] += 1;
  return out;
}

DatasetConfig DatasetConfig::desk_default() {
  DatasetConfig c;
  c.train_counts = apportion(90, reference_train_counts());
  c.test_counts.fill(5);
  return c;
}

void DatasetConfig::validate() const {
  if (image_size < 8) throw ConfigError("dataset image_size must be at least 8");
  SceneSpec s = scene;
  s.image_size = image_size;
  s.validate();
  weather.validate();
}

DatasetManifest generate_dataset(const DatasetConfig& config, const fs::path& out_dir) {
  config.validate();
  const auto& table = NoiseClassTable::standard();
  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.seed = config.seed;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory (" + ec.message() + ")", out_dir.string());

  std::uint64_t index = 0;
  for (const auto& [split, counts] : {std::pair{std::string("train"), config.train_counts},
                                      std::pair{std::string("test"), config.test_counts}}) {
    for (std::size_t k = 0; k < kNoiseClassCount; ++k) {
      if (counts[k] == 0) continue;
      const fs::path rel_dir = fs::path(split) / table.name(k);
      fs::create_directories(out_dir / rel_dir, ec);
      if (ec) throw IoError("cannot create directory (" + ec.message() + ")", (out_dir / rel_dir).string());
      for (std::size_t j = 0; j < counts[k]; ++j, ++index) {
        SceneSpec spec = config.scene;
        spec.seed = derive_seed(config.seed, index);
        spec.image_size = config.image_size;
        const Scene scene = render_scene(spec);
        const Image degraded = apply_weather(scene.image, k, config.weather, derive_seed(spec.seed, 0x5745415448ULL));

        char id[16];
        std::snprintf(id, sizeof id, "%04zu", j);
        DatasetEntry e{(rel_dir / (std::string(id) + ".png")).generic_string(),
                       (rel_dir / (std::string(id) + "_gt.png")).generic_string(), table.name(k), k, split};
        write_png(out_dir / e.image, degraded);
        write_png(out_dir / e.mask, scene.mask);
        manifest.entries.push_back(std::move(e));
      }
    }
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

// ---- splits and loading ----

DatasetManifest filter_split(const DatasetManifest& manifest, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("split fraction must lie in (0, 1]");
  const std::size_t n = manifest.entries.size();
  // Floor, not round: 50% of the 12891-image reference set is listed as 6445.
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  order.resize(keep);
  std::sort(order.begin(), order.end());
  DatasetManifest out = manifest;
  out.entries.clear();
  for (std::size_t i : order) out.entries.push_back(manifest.entries[i]);
  return out;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<fs::path> sorted_children(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

void scan_class_dir(const fs::path& root, const fs::path& dir, std::size_t class_index, const std::string& split,
                    DatasetManifest& manifest) {
  const auto& table = NoiseClassTable::standard();
  std::set<std::string> images, masks;
  for (const auto& p : sorted_children(dir)) {
    if (!fs::is_regular_file(p) || p.extension() != ".png") continue;
    const std::string stem = p.stem().string();
    (ends_with(stem, "_gt") ? masks : images).insert(ends_with(stem, "_gt") ? stem.substr(0, stem.size() - 3) : stem);
  }
  for (const auto& m : masks) {
    if (!images.count(m)) throw DataError("mask without image: " + (dir / (m + "_gt.png")).string());
  }
  for (const auto& id : images) {
    const fs::path image = dir / (id + ".png"), mask = dir / (id + "_gt.png");
    if (!masks.count(id)) throw DataError("missing mask for " + image.string());
    const Image m = read_png(mask, 1);
    if (std::any_of(m.data.begin(), m.data.end(), [](double v) { return v != 0.0 && v != 1.0; })) {
      ++manifest.warnings;
      std::cerr << "warning: nonbinary mask " << mask.string() << " will be binarized at 128/255\n";
    }
    manifest.entries.push_back({fs::relative(image, root).generic_string(), fs::relative(mask, root).generic_string(),
                                table.name(class_index), class_index, split});
  }
}

}  // namespace

DatasetManifest load_wxsod_layout(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("dataset root is not a directory", root.string());
  const auto& table = NoiseClassTable::standard();
  DatasetManifest manifest;
  manifest.root = root;
  for (const auto& dir : sorted_children(root)) {
    if (!fs::is_directory(dir)) continue;
    const std::string name = dir.filename().string();
    if (auto idx = table.find(name)) {
      scan_class_dir(root, dir, *idx, "", manifest);
      continue;
    }
    // Otherwise a split directory, whose subdirectories must all be classes.
    std::vector<std::pair<fs::path, std::size_t>> classes;
    for (const auto& sub : sorted_children(dir)) {
      if (!fs::is_directory(sub)) continue;
      const auto idx = table.find(sub.filename().string());
      if (!idx) throw DataError("unknown class directory " + sub.string());
      classes.emplace_back(sub, *idx);
    }
    if (classes.empty()) throw DataError("unknown class directory " + dir.string());
    for (const auto& [sub, idx] : classes) scan_class_dir(root, sub, idx, name, manifest);
  }
  return manifest;
}

namespace {

Image resize_bilinear(const Image& src, std::size_t size) {
  Image out(src.channels, size, size);
  const double sy = static_cast<double>(src.height) / size, sx = static_cast<double>(src.width) / size;
  for (std::size_t y = 0; y < size; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - y0;
    for (std::size_t x = 0; x < size; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - x0;
      for (std::size_t c = 0; c < src.channels; ++c) {
        const double top = src.at(c, y0, x0) * (1 - tx) + src.at(c, y0, x1) * tx;
        const double bottom = src.at(c, y1, x0) * (1 - tx) + src.at(c, y1, x1) * tx;
        out.at(c, y, x) = top * (1 - ty) + bottom * ty;
      }
    }
  }
  return out;
}

Image resize_nearest(const Image& src, std::size_t size) {
  Image out(src.channels, size, size);
  for (std::size_t y = 0; y < size; ++y) {
    const std::size_t yy = std::min(y * src.height / size, src.height - 1);
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t xx = std::min(x * src.width / size, src.width - 1);
      for (std::size_t c = 0; c < src.channels; ++c) out.at(c, y, x) = src.at(c, yy, xx);
    }
  }
  return out;
}

}  // namespace

std::vector<Sample> load_samples(const DatasetManifest& manifest, std::size_t image_size) {
  std::vector<Sample> samples;
  samples.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    Image image = read_png(manifest.root / e.image, 3);
    Image mask = read_png(manifest.root / e.mask, 1);
    if (image.height != mask.height || image.width != mask.width) {
      throw DataError("image and mask sizes differ for " + e.image);
    }
    if (image.height != image_size || image.width != image_size) {
      image = resize_bilinear(image, image_size);
      mask = resize_nearest(mask, image_size);
    }
    for (auto& v : mask.data) v = v >= 128.0 / 255.0 ? 1.0 : 0.0;
    samples.push_back({Tensor({3, image_size, image_size}, std::move(image.data)),
                       Tensor({1, image_size, image_size}, std::move(mask.data)), e.class_index,
                       fs::path(e.image).replace_extension().generic_string()});
  }
  return samples;
}

}  // namespace nifm
