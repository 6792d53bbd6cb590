#pragma once

// Noise indicator fusion: one-hot weather indicators, the fusion block that
// turns (pooled stage features, indicator) into channel weights, and the
// integration variants used when chaining blocks across encoder stages.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nifm/tensor.hpp"

namespace nifm {

inline constexpr std::size_t kNoiseClassCount = 9;

// Ordered weather-noise class names. Index order defines the one-hot layout.
class NoiseClassTable {
 public:
  NoiseClassTable();
  explicit NoiseClassTable(std::vector<std::string> names);

  static const NoiseClassTable& standard();

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t index) const;
  const std::vector<std::string>& names() const { return names_; }
  std::optional<std::size_t> find(std::string_view name) const;
  // Throws ConfigError listing the valid names.
  std::size_t index_of(std::string_view name) const;

 private:
  std::vector<std::string> names_;
};

struct NoiseIndicator {
  std::size_t class_index = 0;
  std::vector<double> vector;
};

NoiseIndicator make_indicator(std::string_view class_name,
                              const NoiseClassTable& table = NoiseClassTable::standard());
NoiseIndicator make_indicator(std::size_t class_index, std::size_t length = kNoiseClassCount);

// Stacks per-image indicators into an [N, M] tensor.
Tensor indicator_batch(std::span<const NoiseIndicator> indicators);

enum class NifmVariant { Default, Recursive, Hybrid, Prompt, Disabled };

std::string to_string(NifmVariant variant);
NifmVariant parse_variant(std::string_view text);

// Parameters of one fusion block:
//   weights = sigmoid(fc2(relu(fc1(concat(GAP(features), conditioning)))))
//   modulated = weights (x) features, channel-wise
struct NifmBlock {
  std::size_t channels_in = 0;
  std::size_t indicator_len = 0;
  std::size_t hidden_dim = 0;
  Tensor fc1_weight;  // [hidden, channels_in + indicator_len]
  Tensor fc1_bias;    // [hidden]
  Tensor fc2_weight;  // [channels_in, hidden]
  Tensor fc2_bias;    // [channels_in]
  NifmVariant role = NifmVariant::Default;
  Tensor prompt;  // [1, kNoiseClassCount]; Prompt role only

  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
};

// max(channels / 4, 9)
std::size_t nifm_hidden_dim(std::size_t channels);

// FC weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
NifmBlock make_nifm_block(std::size_t channels_in, std::size_t indicator_len, NifmVariant role,
                          std::uint64_t seed);

// Block whose conditioning is a learnable length-9 vector drawn from
// N(0, 0.02^2); the indicator passed at forward time is ignored.
NifmBlock make_prompt_block(std::size_t channels_in, std::uint64_t seed);

struct NifmOutput {
  Tensor modulated;  // [N, C, H, W]
  Tensor weights;    // [N, C]
};

NifmOutput nifm_forward(const NifmBlock& block, const Tensor& features, const Tensor& conditioning);

// Conditioning input for the fusion block after stage `stage` (1-based, 1..4).
// `prev_weights` is the previous block's weight output, required for stages
// >= 2 under Recursive and Hybrid integration and ignored otherwise.
Tensor conditioning_for_stage(NifmVariant variant, std::size_t stage, const Tensor& indicator,
                              const Tensor& prev_weights = Tensor());

// Conditioning width a block at `stage` receives under `variant`, given the
// channel count of the previous stage.
std::size_t conditioning_length(NifmVariant variant, std::size_t stage, std::size_t prev_channels,
                                std::size_t indicator_len = kNoiseClassCount);

}  // namespace nifm
