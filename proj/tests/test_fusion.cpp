#include <gtest/gtest.h>

#include <random>

#include "nifm/error.hpp"
#include "nifm/fusion.hpp"
#include "oracles/gradcheck.hpp"
#include "oracles/scalar_nifm.hpp"

using namespace nifm;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

NifmBlock zero_block(std::size_t c, std::size_t l) {
  NifmBlock b = make_nifm_block(c, l, NifmVariant::Default, 1);
  for (Tensor* t : {&b.fc1_weight, &b.fc1_bias, &b.fc2_weight, &b.fc2_bias}) {
    auto d = t->mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
  return b;
}

Tensor rain_batch(std::size_t n) {
  std::vector<NoiseIndicator> inds(n, make_indicator("Rain"));
  return indicator_batch(inds);
}

}  // namespace

TEST(Indicator, OneHotLayout) {
  EXPECT_EQ(make_indicator("Rain").vector, (std::vector<double>{0, 1, 0, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(make_indicator("Snow").vector, (std::vector<double>{0, 0, 1, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(make_indicator("Clean").vector, (std::vector<double>{1, 0, 0, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(NoiseClassTable::standard().size(), kNoiseClassCount);
}

TEST(Indicator, EveryClassIsOneHot) {
  const auto& table = NoiseClassTable::standard();
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto ind = make_indicator(table.name(i));
    EXPECT_EQ(ind.class_index, i);
    double total = 0.0;
    for (double v : ind.vector) {
      EXPECT_TRUE(v == 0.0 || v == 1.0);
      total += v;
    }
    EXPECT_EQ(total, 1.0);
    EXPECT_EQ(ind.vector[i], 1.0);
  }
}

TEST(Indicator, UnknownClassListsValidNames) {
  try {
    make_indicator("Hail");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("Hail"), std::string::npos);
    EXPECT_NE(msg.find("Rain&Fog"), std::string::npos);
    EXPECT_EQ(std::string(e.category()), "config");
  }
}

TEST(Indicator, BatchStacksRows) {
  std::vector<NoiseIndicator> inds{make_indicator("Rain"), make_indicator("Fog")};
  Tensor t = indicator_batch(inds);
  EXPECT_EQ(t.shape(), (Shape{2, 9}));
  EXPECT_EQ(t[1], 1.0);
  EXPECT_EQ(t[9 + 3], 1.0);
}

TEST(Variant, NamesRoundTrip) {
  for (auto v : {NifmVariant::Default, NifmVariant::Recursive, NifmVariant::Hybrid, NifmVariant::Prompt,
                 NifmVariant::Disabled}) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
  EXPECT_THROW(parse_variant("both"), ConfigError);
}

TEST(NifmBlock, ShapesFollowChannels) {
  NifmBlock b = make_nifm_block(64, 9, NifmVariant::Default, 3);
  EXPECT_EQ(b.hidden_dim, 16u);
  EXPECT_EQ(b.fc1_weight.shape(), (Shape{16, 73}));
  EXPECT_EQ(b.fc2_weight.shape(), (Shape{64, 16}));
  EXPECT_EQ(b.parameter_count(), 16u * 73 + 16 + 64 * 16 + 64);
  EXPECT_EQ(nifm_hidden_dim(16), 9u);
}

TEST(NifmForward, ZeroFcGivesHalfWeights) {
  std::mt19937_64 rng(5);
  NifmBlock b = zero_block(6, 9);
  Tensor f = oracle::random_tensor({2, 6, 3, 3}, rng);
  auto out = nifm_forward(b, f, rain_batch(2));
  for (double w : out.weights.data()) EXPECT_EQ(w, 0.5);
  for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_EQ(out.modulated[i], 0.5 * f[i]);
}

TEST(NifmForward, MatchesScalarOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + trial % 3, c = 4 + trial % 5, h = 2 + trial % 3, w = 3;
    NifmBlock b = make_nifm_block(c, 9, NifmVariant::Default, 100 + trial);
    Tensor f = oracle::random_tensor({n, c, h, w}, rng);
    Tensor cond = oracle::random_tensor({n, 9}, rng, false, 0.0, 1.0);
    auto out = nifm_forward(b, f, cond);
    auto ref = oracle::scalar_nifm(values(f), n, c, h * w, values(cond), 9, values(b.fc1_weight),
                                   values(b.fc1_bias), values(b.fc2_weight), values(b.fc2_bias), b.hidden_dim);
    for (std::size_t i = 0; i < ref.weights.size(); ++i) EXPECT_NEAR(out.weights[i], ref.weights[i], 1e-12);
    for (std::size_t i = 0; i < ref.modulated.size(); ++i) EXPECT_NEAR(out.modulated[i], ref.modulated[i], 1e-12);
  }
}

TEST(NifmForward, WeightsStrictlyInsideUnitInterval) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    NifmBlock b = make_nifm_block(8, 9, NifmVariant::Default, trial);
    Tensor f = oracle::random_tensor({2, 8, 2, 2}, rng, false, -3.0, 3.0);
    auto out = nifm_forward(b, f, rain_batch(2));
    for (double w : out.weights.data()) {
      EXPECT_GT(w, 0.0);
      EXPECT_LT(w, 1.0);
    }
  }
}

TEST(NifmForward, IndicatorSensitivity) {
  std::mt19937_64 rng(3);
  int differing = 0;
  for (int trial = 0; trial < 100; ++trial) {
    NifmBlock b = make_nifm_block(8, 9, NifmVariant::Default, 1000 + trial);
    Tensor f = oracle::random_tensor({1, 8, 4, 4}, rng);
    const std::size_t a = trial % 9, z = (trial + 1 + trial % 8) % 9;
    ASSERT_NE(a, z);
    NoiseIndicator ia = make_indicator(a), iz = make_indicator(z);
    auto wa = nifm_forward(b, f, indicator_batch(std::span(&ia, 1))).weights;
    auto wz = nifm_forward(b, f, indicator_batch(std::span(&iz, 1))).weights;
    if (values(wa) != values(wz)) ++differing;
  }
  EXPECT_GE(differing, 99);
}

TEST(NifmForward, ModulationIdentity) {
  std::mt19937_64 rng(4);
  Tensor f = oracle::random_tensor({2, 3, 2, 2}, rng);
  EXPECT_EQ(values(channel_scale(f, Tensor::full({2, 3}, 1.0))), values(f));
  const Tensor zeroed = channel_scale(f, Tensor::zeros({2, 3}));
  for (double v : zeroed.data()) EXPECT_EQ(v, 0.0);
}

TEST(NifmForward, Deterministic) {
  std::mt19937_64 rng(6);
  NifmBlock b = make_nifm_block(5, 9, NifmVariant::Default, 8);
  Tensor f = oracle::random_tensor({2, 5, 4, 4}, rng);
  EXPECT_EQ(values(nifm_forward(b, f, rain_batch(2)).modulated), values(nifm_forward(b, f, rain_batch(2)).modulated));
}

TEST(NifmForward, ShapeMismatches) {
  NifmBlock b = make_nifm_block(5, 9, NifmVariant::Default, 8);
  EXPECT_THROW(nifm_forward(b, Tensor::zeros({1, 4, 2, 2}), rain_batch(1)), DimensionError);
  EXPECT_THROW(nifm_forward(b, Tensor::zeros({1, 5, 2, 2}), Tensor::zeros({1, 8})), DimensionError);
  EXPECT_THROW(nifm_forward(b, Tensor::zeros({2, 5, 2, 2}), rain_batch(1)), DimensionError);
  EXPECT_THROW(nifm_forward(b, Tensor::zeros({5, 2, 2}), rain_batch(1)), DimensionError);
}

TEST(NifmForward, IndicatorColumnsReceiveGradient) {
  std::mt19937_64 rng(7);
  NifmBlock b = make_nifm_block(6, 9, NifmVariant::Default, 21);
  Tensor f = oracle::random_tensor({2, 6, 3, 3}, rng);
  std::vector<NoiseIndicator> inds{make_indicator("Rain"), make_indicator("Snow&Fog")};
  auto out = nifm_forward(b, f, indicator_batch(inds));
  backward(oracle::weighted_sum(out.modulated, 99));
  const auto g = b.fc1_weight.grad();
  double mass = 0.0;
  for (std::size_t o = 0; o < b.hidden_dim; ++o) {
    for (std::size_t j = 6; j < 15; ++j) mass += std::abs(g[o * 15 + j]);
  }
  EXPECT_GT(mass, 0.0);
}

TEST(NifmForward, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  NifmBlock b = make_nifm_block(4, 9, NifmVariant::Default, 5);
  Tensor f = oracle::random_tensor({2, 4, 2, 3}, rng);
  Tensor cond = oracle::random_tensor({2, 9}, rng, false, 0.0, 1.0);
  auto res = oracle::finite_difference_check(
      [&](const std::vector<Tensor>& in) {
        NifmBlock local = b;
        local.fc1_weight = in[2];
        local.fc2_weight = in[3];
        return oracle::weighted_sum(nifm_forward(local, in[0], in[1]).modulated, 1);
      },
      {f, cond, b.fc1_weight, b.fc2_weight});
  EXPECT_TRUE(res.ok) << res.detail;
}

TEST(Conditioning, StageRules) {
  Tensor rain = rain_batch(1);
  Tensor w1 = Tensor({1, 4}, {0.1, 0.2, 0.3, 0.4});

  EXPECT_EQ(values(conditioning_for_stage(NifmVariant::Default, 3, rain)), values(rain));

  Tensor hybrid = conditioning_for_stage(NifmVariant::Hybrid, 2, rain, w1);
  EXPECT_EQ(hybrid.shape(), (Shape{1, 13}));
  std::vector<double> expect = values(rain);
  expect.insert(expect.end(), {0.1, 0.2, 0.3, 0.4});
  EXPECT_EQ(values(hybrid), expect);

  NoiseIndicator fog = make_indicator("Fog");
  Tensor fog_t = indicator_batch(std::span(&fog, 1));
  EXPECT_EQ(values(conditioning_for_stage(NifmVariant::Recursive, 1, fog_t)), fog.vector);
  EXPECT_EQ(values(conditioning_for_stage(NifmVariant::Recursive, 2, fog_t, w1)), values(w1));
  EXPECT_EQ(values(conditioning_for_stage(NifmVariant::Prompt, 4, fog_t, w1)), fog.vector);
}

TEST(Conditioning, MissingPredecessorIsAnError) {
  Tensor rain = rain_batch(1);
  EXPECT_THROW(conditioning_for_stage(NifmVariant::Recursive, 2, rain), ConfigError);
  EXPECT_THROW(conditioning_for_stage(NifmVariant::Hybrid, 4, rain), ConfigError);
  EXPECT_THROW(conditioning_for_stage(NifmVariant::Default, 0, rain), ConfigError);
  EXPECT_THROW(conditioning_for_stage(NifmVariant::Default, 5, rain), ConfigError);
}

TEST(Conditioning, LengthsMatchLayout) {
  EXPECT_EQ(conditioning_length(NifmVariant::Default, 2, 16), 9u);
  EXPECT_EQ(conditioning_length(NifmVariant::Recursive, 1, 16), 9u);
  EXPECT_EQ(conditioning_length(NifmVariant::Recursive, 3, 32), 32u);
  EXPECT_EQ(conditioning_length(NifmVariant::Hybrid, 2, 16), 25u);
}

TEST(PromptBlock, DeterministicAndFixedLength) {
  for (std::size_t c : {4u, 16u, 64u}) {
    NifmBlock a = make_prompt_block(c, 42), b = make_prompt_block(c, 42);
    EXPECT_EQ(a.prompt.shape(), (Shape{1, 9}));
    EXPECT_EQ(values(a.prompt), values(b.prompt));
  }
  EXPECT_NE(values(make_prompt_block(8, 1).prompt), values(make_prompt_block(8, 2).prompt));
}

TEST(PromptBlock, IgnoresIndicatorAndLearnsPrompt) {
  std::mt19937_64 rng(9);
  NifmBlock b = make_prompt_block(6, 13);
  Tensor f = oracle::random_tensor({2, 6, 3, 3}, rng);
  std::vector<NoiseIndicator> other{make_indicator("Dark"), make_indicator("Light")};
  auto out = nifm_forward(b, f, rain_batch(2));
  EXPECT_EQ(values(out.weights), values(nifm_forward(b, f, indicator_batch(other)).weights));

  backward(oracle::weighted_sum(out.modulated, 3));
  double mass = 0.0;
  for (double g : b.prompt.grad()) mass += std::abs(g);
  EXPECT_GT(mass, 0.0);
}
