#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "nifm/dataset.hpp"
#include "nifm/error.hpp"
#include "nifm/random.hpp"

using namespace nifm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("nifm_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

DatasetConfig tiny_config(std::uint64_t seed) {
  DatasetConfig c;
  c.train_counts.fill(1);
  c.test_counts = {1, 0, 0, 0, 0, 0, 0, 0, 1};
  c.image_size = 32;
  c.seed = seed;
  return c;
}

DatasetManifest synthetic_manifest(std::size_t n) {
  DatasetManifest m;
  for (std::size_t i = 0; i < n; ++i) m.entries.push_back({"i" + std::to_string(i), "m", "Rain", 1, "train"});
  return m;
}

Scene scene_for(std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  return render_scene(spec);
}

}  // namespace

TEST(Png, QuantizeRoundsHalfUp) {
  EXPECT_EQ(quantize(0.0), 0);
  EXPECT_EQ(quantize(1.0), 255);
  EXPECT_EQ(quantize(0.5), 128);  // 127.5 rounds up
  EXPECT_EQ(quantize(-0.2), 0);
  EXPECT_EQ(quantize(1.7), 255);
  EXPECT_EQ(quantize(1.5 / 255.0), 2);
}

TEST(Png, RoundTripIsExactOnGrid) {
  const auto dir = scratch("png");
  Image rgb(3, 5, 7);
  for (std::size_t i = 0; i < rgb.data.size(); ++i) rgb.data[i] = static_cast<double>((i * 37) % 256) / 255.0;
  write_png(dir / "a.png", rgb);
  EXPECT_EQ(read_png(dir / "a.png", 3), rgb);

  Image gray(1, 4, 4);
  gray.data[5] = 1.0;
  write_png(dir / "g.png", gray);
  EXPECT_EQ(read_png(dir / "g.png", 1), gray);
  EXPECT_THROW(read_png(dir / "missing.png", 1), IoError);
}

TEST(Scene, MaskIsBinaryUnionAndImageInRange) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = scene_for(seed);
    double fg = 0.0;
    for (double v : s.mask.data) {
      EXPECT_TRUE(v == 0.0 || v == 1.0);
      fg += v;
    }
    EXPECT_GT(fg, 0.0);
    EXPECT_LT(fg, static_cast<double>(s.mask.data.size()));
    for (double v : s.image.data) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_EQ(scene_for(3).image, scene_for(3).image);
  EXPECT_NE(scene_for(3).image, scene_for(4).image);
}

TEST(Weather, CleanIsIdentityAndDarkIsGain) {
  const Scene s = scene_for(1);
  EXPECT_EQ(apply_weather(s.image, 0, WeatherParams{}, 9), s.image);

  Image flat(3, 4, 4, 0.5);
  for (double v : apply_weather(flat, 5, WeatherParams{}, 9).data) EXPECT_DOUBLE_EQ(v, 0.2);
  for (double v : apply_weather(flat, 4, WeatherParams{}, 9).data) EXPECT_DOUBLE_EQ(v, 0.8);
  for (double v : apply_weather(flat, 3, WeatherParams{}, 9).data) EXPECT_DOUBLE_EQ(v, 0.7);
}

TEST(Weather, EveryClassStaysInRangeAndDiffers) {
  const Scene s = scene_for(2);
  const Image mask_before = s.mask;
  for (std::size_t k = 0; k < kNoiseClassCount; ++k) {
    const Image out = apply_weather(s.image, k, WeatherParams{}, 17);
    for (double v : out.data) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    if (k > 0) {
      EXPECT_NE(out, s.image) << k;
    }
  }
  EXPECT_EQ(s.mask, mask_before);
}

TEST(Weather, CompoundDiffersFromConstituents) {
  const Scene s = scene_for(5);
  const Image rain = apply_weather(s.image, 1, WeatherParams{}, 3);
  const Image fog = apply_weather(s.image, 3, WeatherParams{}, 3);
  const Image both = apply_weather(s.image, 7, WeatherParams{}, 3);
  EXPECT_NE(both, rain);
  EXPECT_NE(both, fog);
  EXPECT_EQ(weather_effects(8), (std::vector<Effect>{Effect::Snow, Effect::Fog}));
  EXPECT_THROW(weather_effects(9), ConfigError);
}

TEST(Apportion, DeskCountsFollowReferenceRatios) {
  const auto counts = apportion(90, reference_train_counts());
  EXPECT_EQ(counts, (std::array<std::size_t, 9>{4, 10, 11, 11, 11, 11, 10, 11, 11}));
  std::size_t total = 0;
  for (auto c : reference_train_counts()) total += c;
  EXPECT_EQ(total, 12891u);
  const auto desk = DatasetConfig::desk_default();
  EXPECT_EQ(desk.train_counts, counts);
  for (auto c : desk.test_counts) EXPECT_EQ(c, 5u);
}

TEST(FilterSplit, ReferenceSizes) {
  const auto m = synthetic_manifest(12891);
  EXPECT_EQ(filter_split(m, 0.5, 1).entries.size(), 6445u);
  EXPECT_EQ(filter_split(m, 0.3, 1).entries.size(), 3867u);
  EXPECT_EQ(filter_split(m, 1.0, 1).entries, m.entries);
}

TEST(FilterSplit, SeededSubsetWithoutReplacement) {
  const auto m = synthetic_manifest(200);
  const auto a = filter_split(m, 0.3, 7), b = filter_split(m, 0.3, 7), c = filter_split(m, 0.3, 8);
  EXPECT_EQ(a.entries, b.entries);
  EXPECT_NE(a.entries, c.entries);
  std::set<std::string> seen;
  for (const auto& e : a.entries) EXPECT_TRUE(seen.insert(e.image).second);
  EXPECT_THROW(filter_split(m, 0.0, 1), ConfigError);
  EXPECT_THROW(filter_split(m, 1.5, 1), ConfigError);
}

TEST(Generate, LayoutCountsAndDeterminism) {
  const auto a = scratch("gen_a"), b = scratch("gen_b");
  const auto ma = generate_dataset(tiny_config(11), a);
  generate_dataset(tiny_config(11), b);

  EXPECT_EQ(ma.entries.size(), 11u);
  EXPECT_EQ(ma.with_split("train").class_counts(), tiny_config(11).train_counts);
  EXPECT_EQ(ma.with_split("test").class_counts(), tiny_config(11).test_counts);
  EXPECT_EQ(ma.entries[1].image, "train/Rain/0000.png");
  EXPECT_EQ(ma.entries[1].mask, "train/Rain/0000_gt.png");

  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  for (const auto& e : ma.entries) {
    EXPECT_EQ(slurp(a / e.image), slurp(b / e.image)) << e.image;
    EXPECT_EQ(slurp(a / e.mask), slurp(b / e.mask)) << e.mask;
  }

  const auto loaded = load_manifest(a / "manifest.json");
  EXPECT_EQ(loaded.entries, ma.entries);
  EXPECT_EQ(loaded.seed, 11u);
}

TEST(Generate, CleanImageMatchesUndegradedRender) {
  const auto dir = scratch("gen_clean");
  const auto config = tiny_config(4);
  const auto m = generate_dataset(config, dir);
  // Entry 0 is the first generated sample: train/Clean, scene index 0.
  SceneSpec spec = config.scene;
  spec.seed = derive_seed(config.seed, 0);
  spec.image_size = config.image_size;
  const Scene scene = render_scene(spec);
  const auto png_dir = scratch("gen_clean_ref");
  write_png(png_dir / "ref.png", scene.image);
  EXPECT_EQ(slurp(dir / m.entries[0].image), slurp(png_dir / "ref.png"));
  write_png(png_dir / "ref_gt.png", scene.mask);
  EXPECT_EQ(slurp(dir / m.entries[0].mask), slurp(png_dir / "ref_gt.png"));
}

TEST(Manifest, RejectsMissingFilesAndUnknownClasses) {
  const auto dir = scratch("manifest_bad");
  generate_dataset(tiny_config(2), dir);
  fs::remove(dir / "train/Snow/0000.png");
  EXPECT_THROW(load_manifest(dir / "manifest.json"), IoError);

  std::ofstream(dir / "bad.json") << R"({"seed":1,"entries":[{"image":"x","mask":"y","class":"Hail","split":"train"}]})";
  EXPECT_THROW(load_manifest(dir / "bad.json"), DataError);
  std::ofstream(dir / "junk.json") << "[";
  EXPECT_THROW(load_manifest(dir / "junk.json"), DataError);
}

TEST(Layout, EmptyRootAndSingleRainImage) {
  const auto empty = scratch("layout_empty");
  const auto m0 = load_wxsod_layout(empty);
  EXPECT_TRUE(m0.entries.empty());
  EXPECT_EQ(m0.warnings, 0u);

  const auto root = scratch("layout_rain");
  fs::create_directories(root / "Rain");
  const Scene s = scene_for(8);
  write_png(root / "Rain" / "a.png", s.image);
  write_png(root / "Rain" / "a_gt.png", s.mask);
  const auto m1 = load_wxsod_layout(root);
  ASSERT_EQ(m1.entries.size(), 1u);
  EXPECT_EQ(m1.entries[0].class_index, 1u);
  EXPECT_EQ(m1.entries[0].image, "Rain/a.png");
  EXPECT_EQ(m1.warnings, 0u);
}

TEST(Layout, SplitDirectoriesAndGeneratedCorpus) {
  const auto dir = scratch("layout_gen");
  const auto generated = generate_dataset(tiny_config(6), dir);
  const auto scanned = load_wxsod_layout(dir);
  EXPECT_EQ(scanned.entries.size(), generated.entries.size());
  EXPECT_EQ(scanned.with_split("test").class_counts(), generated.with_split("test").class_counts());
}

TEST(Layout, Errors) {
  const auto root = scratch("layout_errors");
  fs::create_directories(root / "Hail");
  EXPECT_THROW(load_wxsod_layout(root), DataError);

  fs::remove_all(root / "Hail");
  fs::create_directories(root / "train" / "Fog");
  write_png(root / "train" / "Fog" / "x.png", Image(3, 4, 4, 0.5));
  EXPECT_THROW(load_wxsod_layout(root), DataError);  // missing mask

  fs::remove(root / "train" / "Fog" / "x.png");
  write_png(root / "train" / "Fog" / "y_gt.png", Image(1, 4, 4, 0.0));
  EXPECT_THROW(load_wxsod_layout(root), DataError);  // mask without image

  EXPECT_THROW(load_wxsod_layout(root / "absent"), IoError);
}

TEST(Layout, NonbinaryMaskIsBinarizedWithWarning) {
  const auto root = scratch("layout_soft");
  fs::create_directories(root / "Dark");
  write_png(root / "Dark" / "s.png", Image(3, 32, 32, 0.3));
  Image soft(1, 32, 32, 0.0);
  soft.data[0] = 127.0 / 255.0;
  soft.data[1] = 128.0 / 255.0;
  soft.data[2] = 1.0;
  write_png(root / "Dark" / "s_gt.png", soft);
  const auto m = load_wxsod_layout(root);
  EXPECT_EQ(m.warnings, 1u);
  const auto samples = load_samples(m, 32);
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_EQ(samples[0].mask[0], 0.0);
  EXPECT_EQ(samples[0].mask[1], 1.0);
  EXPECT_EQ(samples[0].mask[2], 1.0);
  EXPECT_EQ(samples[0].class_index, 5u);
}

TEST(Samples, ShapesAndResize) {
  const auto dir = scratch("samples");
  const auto m = generate_dataset(tiny_config(3), dir);
  const auto same = load_samples(m, 32);
  ASSERT_EQ(same.size(), m.entries.size());
  EXPECT_EQ(same[0].image.shape(), (Shape{3, 32, 32}));
  EXPECT_EQ(same[0].mask.shape(), (Shape{1, 32, 32}));
  EXPECT_EQ(same[2].class_index, 2u);
  const auto big = load_samples(m, 64);
  EXPECT_EQ(big[0].image.shape(), (Shape{3, 64, 64}));
  for (double v : big[0].mask.data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
}
