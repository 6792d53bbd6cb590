#include "nifm/model.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "nifm/error.hpp"
#include "nifm/json_io.hpp"
#include "nifm/random.hpp"

namespace nifm {

namespace {

// He-uniform weights, zero bias.
ConvLayer make_conv(std::size_t in, std::size_t out, std::size_t k, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in * k * k));
  std::vector<double> w(out * in * k * k);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return {Tensor({out, in, k, k}, std::move(w), true), Tensor::zeros({out}, true)};
}

Tensor apply_conv(const Tensor& x, const ConvLayer& layer) {
  const std::size_t k = layer.weight.dim(2);
  return conv2d(x, layer.weight, layer.bias, 1, k / 2);
}

}  // namespace

void EncoderSpec::validate() const {
  if (stage_channels.size() != kEncoderStages) {
    throw ConfigError("encoder needs exactly 5 stage widths, got " + std::to_string(stage_channels.size()));
  }
  for (auto c : stage_channels) {
    if (c == 0) throw ConfigError("encoder stage width must be positive");
  }
  if (blocks_per_stage == 0) throw ConfigError("blocks_per_stage must be positive");
  if (input_channels == 0) throw ConfigError("input_channels must be positive");
}

std::string to_string(DecoderKind kind) {
  return kind == DecoderKind::PlainTopDown ? "plain_top_down" : "deep_supervised";
}

DecoderKind parse_decoder_kind(std::string_view text) {
  if (text == "plain_top_down") return DecoderKind::PlainTopDown;
  if (text == "deep_supervised") return DecoderKind::DeepSupervised;
  throw ConfigError("unknown decoder '" + std::string(text) + "'; valid: plain_top_down, deep_supervised");
}

Encoder make_encoder(const EncoderSpec& spec, std::uint64_t seed) {
  spec.validate();
  Encoder enc;
  enc.spec = spec;
  Rng rng(derive_seed(seed, 1));
  std::size_t in = spec.input_channels;
  for (std::size_t s = 0; s < kEncoderStages; ++s) {
    std::vector<ConvLayer> convs;
    for (std::size_t b = 0; b < 2 * spec.blocks_per_stage; ++b) {
      convs.push_back(make_conv(in, spec.stage_channels[s], 3, rng));
      in = spec.stage_channels[s];
    }
    enc.stages.push_back(std::move(convs));
  }
  if (spec.nifm_variant != NifmVariant::Disabled) {
    for (std::size_t n = 1; n < kEncoderStages; ++n) {
      const std::size_t channels = spec.stage_channels[n - 1];
      const std::uint64_t block_seed = derive_seed(seed, 100 + n);
      if (spec.nifm_variant == NifmVariant::Prompt) {
        enc.fusion.push_back(make_prompt_block(channels, block_seed));
      } else {
        const std::size_t prev = n >= 2 ? spec.stage_channels[n - 2] : 0;
        const std::size_t len = conditioning_length(spec.nifm_variant, n, prev);
        enc.fusion.push_back(make_nifm_block(channels, len, spec.nifm_variant, block_seed));
      }
    }
  }
  return enc;
}

Decoder make_decoder(const DecoderSpec& spec, const std::vector<std::size_t>& feature_channels, std::uint64_t seed) {
  if (feature_channels.size() != kEncoderStages) throw ConfigError("decoder expects five encoder feature widths");
  if (spec.width == 0) throw ConfigError("decoder width must be positive");
  Decoder dec;
  dec.spec = spec;
  dec.feature_channels = feature_channels;
  Rng rng(derive_seed(seed, 2));
  for (auto c : feature_channels) dec.lateral.push_back(make_conv(c, spec.width, 1, rng));
  dec.head = make_conv(spec.width, 1, 3, rng);
  if (spec.kind == DecoderKind::DeepSupervised) {
    for (int k = 0; k < 3; ++k) dec.side.push_back(make_conv(spec.width, 1, 3, rng));
  }
  return dec;
}

EncoderOutput encoder_forward(const Encoder& encoder, const Tensor& image, const Tensor& indicators) {
  if (image.rank() != 4) throw DimensionError("image must be [N,C,H,W], got " + shape_str(image.shape()));
  if (image.dim(1) != encoder.spec.input_channels) {
    throw DimensionError("image has " + std::to_string(image.dim(1)) + " channels, encoder expects " +
                             std::to_string(encoder.spec.input_channels),
                         1);
  }
  if (image.dim(2) % 32 != 0 || image.dim(2) == 0) {
    throw DimensionError("image height " + std::to_string(image.dim(2)) + " is not a positive multiple of 32", 2);
  }
  if (image.dim(3) % 32 != 0 || image.dim(3) == 0) {
    throw DimensionError("image width " + std::to_string(image.dim(3)) + " is not a positive multiple of 32", 3);
  }
  const NifmVariant variant = encoder.spec.nifm_variant;

  EncoderOutput out;
  Tensor x = image;
  Tensor prev_weights;
  for (std::size_t s = 0; s < kEncoderStages; ++s) {
    for (const auto& conv : encoder.stages[s]) x = relu(apply_conv(x, conv));
    x = max_pool2(x);
    if (variant != NifmVariant::Disabled && s + 1 < kEncoderStages) {
      const Tensor cond = conditioning_for_stage(variant, s + 1, indicators, prev_weights);
      NifmOutput fused = nifm_forward(encoder.fusion[s], x, cond);
      x = fused.modulated;
      prev_weights = fused.weights;
      out.fusion_weights.push_back(fused.weights);
    }
    out.features.push_back(x);
  }
  return out;
}

DecoderOutput decoder_forward(const Decoder& decoder, const std::vector<Tensor>& features) {
  if (features.size() != kEncoderStages) {
    throw DimensionError("decoder expects 5 features, got " + std::to_string(features.size()));
  }
  for (std::size_t i = 0; i < kEncoderStages; ++i) {
    if (features[i].rank() != 4 || features[i].dim(1) != decoder.feature_channels[i]) {
      throw DimensionError("feature " + std::to_string(i + 1) + " has shape " + shape_str(features[i].shape()) +
                               ", decoder expects " + std::to_string(decoder.feature_channels[i]) + " channels",
                           1);
    }
    if (i > 0 && (features[i].dim(2) * 2 != features[i - 1].dim(2) || features[i].dim(3) * 2 != features[i - 1].dim(3))) {
      throw DimensionError("feature " + std::to_string(i + 1) + " is not half the resolution of its predecessor", 2);
    }
  }

  // Top-down pathway: P5 = L5, P_i = L_i + up(P_{i+1}).
  std::vector<Tensor> pyramid(kEncoderStages);
  pyramid[4] = apply_conv(features[4], decoder.lateral[4]);
  for (std::size_t i = kEncoderStages - 1; i-- > 0;) {
    pyramid[i] = add(apply_conv(features[i], decoder.lateral[i]), upsample_nearest2(pyramid[i + 1]));
  }

  DecoderOutput out;
  out.saliency = sigmoid(apply_conv(upsample_nearest2(pyramid[0]), decoder.head));
  for (std::size_t k = 0; k < decoder.side.size(); ++k) {
    out.sides.push_back(sigmoid(apply_conv(pyramid[k], decoder.side[k])));
  }
  return out;
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  encoder_ = make_encoder(spec_.encoder, spec_.seed);
  decoder_ = make_decoder(spec_.decoder, spec_.encoder.stage_channels, spec_.seed);
}

DecoderOutput Model::forward(const Tensor& image, const Tensor& indicators) const {
  return decoder_forward(decoder_, encoder_forward(encoder_, image, indicators).features);
}

std::vector<NamedParameter> Model::parameters() const {
  std::vector<NamedParameter> params;
  auto add_conv = [&](const std::string& prefix, const ConvLayer& conv) {
    params.push_back({prefix + ".weight", conv.weight});
    params.push_back({prefix + ".bias", conv.bias});
  };
  for (std::size_t s = 0; s < encoder_.stages.size(); ++s) {
    for (std::size_t c = 0; c < encoder_.stages[s].size(); ++c) {
      add_conv("encoder.stage" + std::to_string(s + 1) + ".conv" + std::to_string(c + 1), encoder_.stages[s][c]);
    }
  }
  for (std::size_t n = 0; n < encoder_.fusion.size(); ++n) {
    const auto& b = encoder_.fusion[n];
    const std::string prefix = "encoder.nifm" + std::to_string(n + 1);
    params.push_back({prefix + ".fc1.weight", b.fc1_weight});
    params.push_back({prefix + ".fc1.bias", b.fc1_bias});
    params.push_back({prefix + ".fc2.weight", b.fc2_weight});
    params.push_back({prefix + ".fc2.bias", b.fc2_bias});
    if (b.prompt.defined()) params.push_back({prefix + ".prompt", b.prompt});
  }
  for (std::size_t i = 0; i < decoder_.lateral.size(); ++i) {
    add_conv("decoder.lateral" + std::to_string(i + 1), decoder_.lateral[i]);
  }
  add_conv("decoder.head", decoder_.head);
  for (std::size_t k = 0; k < decoder_.side.size(); ++k) {
    add_conv("decoder.side" + std::to_string(k + 1), decoder_.side[k]);
  }
  return params;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

CostReport count_ops(const ModelSpec& spec, std::size_t resolution, std::size_t timed_runs, std::size_t warmup_runs) {
  const Model model(spec);
  CostReport report;
  report.params = model.parameter_count();
  report.resolution = resolution;

  const Tensor image = Tensor::full({1, spec.encoder.input_channels, resolution, resolution}, 0.5);
  const NoiseIndicator clean = make_indicator(0);
  const Tensor indicators = indicator_batch(std::span(&clean, 1));
  NoGradGuard no_grad;
  {
    MacCounter counter;
    model.forward(image, indicators);
    report.macs = counter.macs();
  }
  if (timed_runs > 0) {
    for (std::size_t i = 0; i < warmup_runs; ++i) model.forward(image, indicators);
    std::vector<double> seconds;
    for (std::size_t i = 0; i < timed_runs; ++i) {
      const auto start = std::chrono::steady_clock::now();
      model.forward(image, indicators);
      seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    std::sort(seconds.begin(), seconds.end());
    const std::size_t m = seconds.size();
    const double median = m % 2 ? seconds[m / 2] : 0.5 * (seconds[m / 2 - 1] + seconds[m / 2]);
    report.fps = median > 0.0 ? 1.0 / median : 0.0;
  }
  return report;
}

std::filesystem::path checkpoint_blob_path(const std::filesystem::path& path) {
  auto blob = path;
  blob.replace_extension(".bin");
  if (blob == path) throw CheckpointError("checkpoint manifest must not use the .bin extension: " + path.string());
  return blob;
}

namespace {

void write_le_f64(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_le_f64(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto blob_path = checkpoint_blob_path(path);
  nlohmann::json manifest;
  manifest["format"] = "nifm-checkpoint";
  manifest["version"] = 1;
  manifest["spec"] = model_spec_to_json(model.spec());
  manifest["blob"] = blob_path.filename().string();

  std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
  if (!blob) throw IoError("cannot write checkpoint blob", blob_path.string());
  std::size_t offset = 0;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    index.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}});
    for (double v : p.tensor.data()) write_le_f64(blob, v);
    offset += p.tensor.numel();
  }
  manifest["tensors"] = std::move(index);
  manifest["total"] = offset;
  blob.close();
  if (!blob) throw IoError("failed writing checkpoint blob", blob_path.string());

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint manifest", path.string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("failed writing checkpoint manifest", path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint", path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint manifest " + path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "nifm-checkpoint") throw CheckpointError("not a checkpoint: " + path.string());

  Model model(model_spec_from_json(manifest.at("spec")));
  const auto blob_path = path.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw IoError("cannot open checkpoint blob", blob_path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());

  const auto params = model.parameters();
  const auto& index = manifest.at("tensors");
  if (index.size() != params.size()) {
    throw CheckpointError("checkpoint lists " + std::to_string(index.size()) + " tensors, spec implies " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = index[i];
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    if (name != params[i].name || shape != params[i].tensor.shape()) {
      throw CheckpointError("checkpoint tensor " + name + " " + shape_str(shape) + " does not match " +
                            params[i].name + " " + shape_str(params[i].tensor.shape()));
    }
    const auto offset = entry.at("offset").get<std::size_t>();
    Tensor t = params[i].tensor;
    auto dst = t.mutable_data();
    if ((offset + dst.size()) * 8 > bytes.size()) throw CheckpointError("checkpoint blob is truncated");
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = read_le_f64(bytes.data() + (offset + j) * 8);
  }
  return model;
}

}  // namespace nifm
