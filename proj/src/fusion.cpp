#include "nifm/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "nifm/error.hpp"
#include "nifm/random.hpp"

namespace nifm {

NoiseClassTable::NoiseClassTable()
    : names_{"Clean", "Rain", "Snow", "Fog", "Light", "Dark", "Rain&Snow", "Rain&Fog", "Snow&Fog"} {}

NoiseClassTable::NoiseClassTable(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw ConfigError("noise class table is empty");
}

const NoiseClassTable& NoiseClassTable::standard() {
  static const NoiseClassTable table;
  return table;
}

const std::string& NoiseClassTable::name(std::size_t index) const {
  if (index >= names_.size()) throw ConfigError("noise class index " + std::to_string(index) + " out of range");
  return names_[index];
}

std::optional<std::size_t> NoiseClassTable::find(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t NoiseClassTable::index_of(std::string_view name) const {
  if (auto idx = find(name)) return *idx;
  std::string valid;
  for (const auto& n : names_) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown noise class '" + std::string(name) + "'; valid names: " + valid);
}

NoiseIndicator make_indicator(std::string_view class_name, const NoiseClassTable& table) {
  return make_indicator(table.index_of(class_name), table.size());
}

NoiseIndicator make_indicator(std::size_t class_index, std::size_t length) {
  if (class_index >= length) {
    throw ConfigError("indicator index " + std::to_string(class_index) + " out of range for length " +
                      std::to_string(length));
  }
  NoiseIndicator ind{class_index, std::vector<double>(length, 0.0)};
  ind.vector[class_index] = 1.0;
  return ind;
}

Tensor indicator_batch(std::span<const NoiseIndicator> indicators) {
  if (indicators.empty()) throw DimensionError("indicator batch is empty", 0);
  const std::size_t len = indicators.front().vector.size();
  std::vector<double> data;
  data.reserve(indicators.size() * len);
  for (const auto& ind : indicators) {
    if (ind.vector.size() != len) throw DimensionError("indicators of different lengths in one batch", 1);
    data.insert(data.end(), ind.vector.begin(), ind.vector.end());
  }
  return Tensor({indicators.size(), len}, std::move(data));
}

std::string to_string(NifmVariant variant) {
  switch (variant) {
    case NifmVariant::Default: return "default";
    case NifmVariant::Recursive: return "recursive";
    case NifmVariant::Hybrid: return "hybrid";
    case NifmVariant::Prompt: return "prompt";
    case NifmVariant::Disabled: return "disabled";
  }
  return "default";
}

NifmVariant parse_variant(std::string_view text) {
  for (auto v : {NifmVariant::Default, NifmVariant::Recursive, NifmVariant::Hybrid, NifmVariant::Prompt,
                 NifmVariant::Disabled}) {
    if (text == to_string(v)) return v;
  }
  throw ConfigError("unknown NIFM variant '" + std::string(text) +
                    "'; valid: default, recursive, hybrid, prompt, disabled");
}

std::vector<Tensor> NifmBlock::parameters() const {
  std::vector<Tensor> p{fc1_weight, fc1_bias, fc2_weight, fc2_bias};
  if (prompt.defined()) p.push_back(prompt);
  return p;
}

std::size_t NifmBlock::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters()) n += t.numel();
  return n;
}

std::size_t nifm_hidden_dim(std::size_t channels) { return std::max<std::size_t>(channels / 4, 9); }

namespace {

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(data), true);
}

}  // namespace

NifmBlock make_nifm_block(std::size_t channels_in, std::size_t indicator_len, NifmVariant role, std::uint64_t seed) {
  if (channels_in == 0 || indicator_len == 0) throw ConfigError("fusion block needs nonzero widths");
  if (role == NifmVariant::Disabled) throw ConfigError("a Disabled variant has no fusion blocks");
  NifmBlock block;
  block.channels_in = channels_in;
  block.indicator_len = indicator_len;
  block.hidden_dim = nifm_hidden_dim(channels_in);
  block.role = role;

  Rng rng(seed);
  const std::size_t fan1 = channels_in + indicator_len;
  const double b1 = 1.0 / std::sqrt(static_cast<double>(fan1));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(block.hidden_dim));
  block.fc1_weight = uniform_param({block.hidden_dim, fan1}, b1, rng);
  block.fc1_bias = uniform_param({block.hidden_dim}, b1, rng);
  block.fc2_weight = uniform_param({channels_in, block.hidden_dim}, b2, rng);
  block.fc2_bias = uniform_param({channels_in}, b2, rng);
  return block;
}

NifmBlock make_prompt_block(std::size_t channels_in, std::uint64_t seed) {
  NifmBlock block = make_nifm_block(channels_in, kNoiseClassCount, NifmVariant::Prompt, seed);
  Rng rng(derive_seed(seed, 0x70726f6d7074ULL));
  std::vector<double> values(kNoiseClassCount);
  for (auto& v : values) v = rng.normal(0.0, 0.02);
  block.prompt = Tensor({1, kNoiseClassCount}, std::move(values), true);
  return block;
}

NifmOutput nifm_forward(const NifmBlock& block, const Tensor& features, const Tensor& conditioning) {
  if (features.rank() != 4) throw DimensionError("fusion features must be [N,C,H,W], got " + shape_str(features.shape()));
  if (features.dim(1) != block.channels_in) {
    throw DimensionError("fusion block expects " + std::to_string(block.channels_in) + " channels, got " +
                             std::to_string(features.dim(1)),
                         1);
  }
  if (conditioning.rank() != 2 || conditioning.dim(0) != features.dim(0)) {
    throw DimensionError("conditioning must be [N,L] with N=" + std::to_string(features.dim(0)) + ", got " +
                             shape_str(conditioning.shape()),
                         0);
  }
  if (conditioning.dim(1) != block.indicator_len) {
    throw DimensionError("fusion block expects conditioning length " + std::to_string(block.indicator_len) +
                             ", got " + std::to_string(conditioning.dim(1)),
                         1);
  }

  Tensor cond = conditioning;
  if (block.role == NifmVariant::Prompt) {
    // Broadcast the learnable prompt over the batch.
    cond = mul(Tensor::full({features.dim(0), 1}, 1.0), block.prompt);
  }
  Tensor joint = concat({global_average_pool(features), cond}, 1);
  Tensor hidden = relu(linear(joint, block.fc1_weight, block.fc1_bias));
  Tensor weights = sigmoid(linear(hidden, block.fc2_weight, block.fc2_bias));
  return {channel_scale(features, weights), weights};
}

Tensor conditioning_for_stage(NifmVariant variant, std::size_t stage, const Tensor& indicator,
                              const Tensor& prev_weights) {
  if (stage < 1 || stage > 4) throw ConfigError("fusion stage must be in 1..4, got " + std::to_string(stage));
  const bool chained = stage >= 2 && (variant == NifmVariant::Recursive || variant == NifmVariant::Hybrid);
  if (!chained) return indicator;
  if (!prev_weights.defined()) {
    throw ConfigError(to_string(variant) + " integration at stage " + std::to_string(stage) +
                      " requires the previous block's weights");
  }
  if (variant == NifmVariant::Recursive) return prev_weights;
  return concat({indicator, prev_weights}, 1);
}

std::size_t conditioning_length(NifmVariant variant, std::size_t stage, std::size_t prev_channels,
                                std::size_t indicator_len) {
  if (stage >= 2 && variant == NifmVariant::Recursive) return prev_channels;
  if (stage >= 2 && variant == NifmVariant::Hybrid) return indicator_len + prev_channels;
  return indicator_len;
}

}  // namespace nifm
