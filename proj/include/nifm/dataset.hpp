#pragma once

// Procedural multi-weather saliency corpus: scene rendering, parametric
// weather degradations, PNG I/O, JSON manifests, split filtering and a loader
// for an on-disk <split>/<class>/<id>.png + <id>_gt.png layout.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "nifm/fusion.hpp"
#include "nifm/tensor.hpp"

namespace nifm {

// Planar float image, channel-major: data[(c * height + y) * width + x].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0);

  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
  bool operator==(const Image&) const = default;
};

// ---- PNG ----

// 8-bit quantization, round half up after clamping to [0,1].
std::uint8_t quantize(double v);
// Writes an 8-bit RGB (3 channels) or grayscale (1 channel) PNG.
void write_png(const std::filesystem::path& path, const Image& image);
// Reads any PNG as 8-bit RGB or grayscale scaled to [0,1].
Image read_png(const std::filesystem::path& path, std::size_t channels);

// ---- scenes ----

enum class ShapeKind { Ellipse, Rectangle, Blob };

struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t image_size = 64;
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  double texture_amplitude = 0.08;  // background sinusoid amplitude
  double texture_frequency = 3.0;   // cycles across the image, upper bound
  std::vector<ShapeKind> shapes{ShapeKind::Ellipse, ShapeKind::Rectangle, ShapeKind::Blob};

  void validate() const;
};

struct Scene {
  Image image;  // 3 x S x S in [0,1]
  Image mask;   // 1 x S x S in {0,1}
};

Scene render_scene(const SceneSpec& spec);

// ---- weather ----

struct WeatherParams {
  std::size_t rain_streaks = 40;
  double rain_angle_deg = 70.0;  // from horizontal
  double rain_length = 8.0;
  double rain_intensity = 0.35;
  double snow_density = 0.012;  // flakes per pixel
  double snow_min_radius = 0.6;
  double snow_max_radius = 1.6;
  double snow_intensity = 0.6;
  double fog_alpha = 0.5;
  double fog_white = 0.9;
  double light_gain = 1.6;
  double dark_gain = 0.4;

  void validate() const;
};

// Constituent effects of a class in application order (Clean: none).
enum class Effect { Rain, Snow, Fog, Light, Dark };
std::vector<Effect> weather_effects(std::size_t class_index);

// Degrades a copy of `image`; every effect clamps to [0,1].
Image apply_weather(const Image& image, std::size_t class_index, const WeatherParams& params, std::uint64_t seed);

// ---- manifests ----

struct DatasetEntry {
  std::string image;  // relative to the manifest root
  std::string mask;
  std::string class_name;
  std::size_t class_index = 0;
  std::string split;

  bool operator==(const DatasetEntry&) const = default;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::uint64_t seed = 0;
  std::vector<DatasetEntry> entries;
  std::size_t warnings = 0;  // nonbinary masks seen while loading a layout

  std::array<std::size_t, kNoiseClassCount> class_counts() const;
  DatasetManifest with_split(const std::string& split) const;
};

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
// Checks that every referenced file exists and every class is known.
DatasetManifest load_manifest(const std::filesystem::path& path);

// ---- generation ----

struct DatasetConfig {
  std::array<std::size_t, kNoiseClassCount> train_counts{};
  std::array<std::size_t, kNoiseClassCount> test_counts{};
  std::size_t image_size = 64;
  std::uint64_t seed = 0;
  SceneSpec scene;  // seed and image_size are overwritten per sample
  WeatherParams weather;

  // 90 training images in the reference class proportions, 5 test images per class.
  static DatasetConfig desk_default();
  void validate() const;
};

// Largest-remainder apportionment of `total` in proportion to `weights`.
std::array<std::size_t, kNoiseClassCount> apportion(std::size_t total,
                                                    const std::array<std::size_t, kNoiseClassCount>& weights);

// Training-set class sizes of the reference corpus (12891 images).
const std::array<std::size_t, kNoiseClassCount>& reference_train_counts();

DatasetManifest generate_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

// ---- splits and loading ----

// Seeded uniform subset of floor(fraction * N) entries, in original order.
DatasetManifest filter_split(const DatasetManifest& manifest, double fraction, std::uint64_t seed);

DatasetManifest load_wxsod_layout(const std::filesystem::path& root);

struct Sample {
  Tensor image;  // [3, S, S]
  Tensor mask;   // [1, S, S], binary
  std::size_t class_index = 0;
  std::string id;
};

// Reads each entry, resizing to `image_size` when needed (bilinear image,
// nearest mask) and binarizing masks at 128/255.
std::vector<Sample> load_samples(const DatasetManifest& manifest, std::size_t image_size);

}  // namespace nifm
