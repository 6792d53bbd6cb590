#pragma once

// Staged encoder with fusion blocks between consecutive stages, two
// interchangeable toy decoders, cost accounting and checkpoint I/O.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nifm/fusion.hpp"
#include "nifm/tensor.hpp"

namespace nifm {

inline constexpr std::size_t kEncoderStages = 5;

struct EncoderSpec {
  std::vector<std::size_t> stage_channels{16, 32, 64, 128, 256};
  std::size_t blocks_per_stage = 1;
  std::size_t input_channels = 3;
  NifmVariant nifm_variant = NifmVariant::Default;

  void validate() const;
  bool operator==(const EncoderSpec&) const = default;
};

enum class DecoderKind { PlainTopDown, DeepSupervised };

std::string to_string(DecoderKind kind);
DecoderKind parse_decoder_kind(std::string_view text);

struct DecoderSpec {
  DecoderKind kind = DecoderKind::PlainTopDown;
  std::size_t width = 16;  // channels of the top-down pathway

  bool operator==(const DecoderSpec&) const = default;
};

struct ModelSpec {
  EncoderSpec encoder;
  DecoderSpec decoder;
  std::uint64_t seed = 0;

  bool operator==(const ModelSpec&) const = default;
};

struct ConvLayer {
  Tensor weight;  // [K, C, k, k]
  Tensor bias;    // [K]
};

struct Encoder {
  EncoderSpec spec;
  // stages[s] holds 2 * blocks_per_stage 3x3 convs, each followed by ReLU,
  // then a 2x2 max-pool.
  std::vector<std::vector<ConvLayer>> stages;
  // Four blocks after stages 1..4; empty when the variant is Disabled.
  std::vector<NifmBlock> fusion;
};

struct Decoder {
  DecoderSpec spec;
  std::vector<std::size_t> feature_channels;
  std::vector<ConvLayer> lateral;  // 1x1, one per encoder feature
  ConvLayer head;                  // 3x3, width -> 1 at input resolution
  std::vector<ConvLayer> side;     // 3x3 heads at 1/2, 1/4, 1/8 (DeepSupervised)
};

Encoder make_encoder(const EncoderSpec& spec, std::uint64_t seed);
Decoder make_decoder(const DecoderSpec& spec, const std::vector<std::size_t>& feature_channels, std::uint64_t seed);

struct EncoderOutput {
  std::vector<Tensor> features;        // F1..F5, F_i at input / 2^i
  std::vector<Tensor> fusion_weights;  // W1..W4 (empty when Disabled)
};

// image [N, input_channels, H, W] with H, W divisible by 32; indicators [N, M].
EncoderOutput encoder_forward(const Encoder& encoder, const Tensor& image, const Tensor& indicators);

struct DecoderOutput {
  Tensor saliency;            // [N, 1, H, W], sigmoid-activated
  std::vector<Tensor> sides;  // sigmoid maps at 1/2, 1/4, 1/8 (DeepSupervised)
};

DecoderOutput decoder_forward(const Decoder& decoder, const std::vector<Tensor>& features);

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

class Model {
 public:
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  const Encoder& encoder() const { return encoder_; }
  const Decoder& decoder() const { return decoder_; }
  Encoder& encoder() { return encoder_; }
  Decoder& decoder() { return decoder_; }

  DecoderOutput forward(const Tensor& image, const Tensor& indicators) const;

  // Stable order: encoder stages, fusion blocks, decoder.
  std::vector<NamedParameter> parameters() const;
  std::size_t parameter_count() const;

 private:
  ModelSpec spec_;
  Encoder encoder_;
  Decoder decoder_;
};

struct CostReport {
  std::size_t params = 0;
  std::uint64_t macs = 0;
  std::size_t resolution = 0;
  double fps = 0.0;
};

// Parameters are counted exactly; MACs are the conv/linear multiply-adds of a
// single-image forward at `resolution`; FPS is the median over `timed_runs`
// forward passes after `warmup_runs` untimed ones (timed_runs == 0 skips it).
CostReport count_ops(const ModelSpec& spec, std::size_t resolution, std::size_t timed_runs = 20,
                     std::size_t warmup_runs = 3);

// Writes `path` (JSON manifest) and a sibling `<stem>.bin` with every
// parameter as little-endian f64 in manifest order.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
std::filesystem::path checkpoint_blob_path(const std::filesystem::path& path);

}  // namespace nifm
