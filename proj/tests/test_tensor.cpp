#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "nifm/error.hpp"
#include "nifm/tensor.hpp"
#include "oracles/gradcheck.hpp"
#include "oracles/primitive_cases.hpp"
#include "oracles/naive_ops.hpp"

using namespace nifm;
using oracle::finite_difference_check;
using oracle::random_tensor;
using oracle::weighted_sum;

namespace {

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double rel = 1e-12) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], b[i], rel * std::max(1.0, std::abs(b[i]))) << "at " << i;
  }
}

}  // namespace

TEST(Tensor, RejectsDataShapeMismatch) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_FALSE(t.has_grad());
}

TEST(Conv2d, IdentityKernel) {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor k({1, 1, 1, 1}, {1});
  Tensor b({1}, {0});
  Tensor y = conv2d(x, k, b, 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(vec(y.data()), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Conv2d, SumOfOnes) {
  Tensor y = conv2d(Tensor::full({1, 1, 3, 3}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0), Tensor({1}, {0}), 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 9.0);
}

TEST(Conv2d, MatchesNaiveLoopsForwardAndBackward) {
  std::mt19937_64 rng(11);
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}}) {
    oracle::ConvGeometry g{1, 2, 5, 5, 3, 3, 3, stride, pad};
    Tensor x = random_tensor({1, 2, 5, 5}, rng, true);
    Tensor k = random_tensor({3, 2, 3, 3}, rng, true);
    Tensor b = random_tensor({3}, rng, true);
    Tensor y = conv2d(x, k, b, stride, pad);
    const auto xv = vec(x.data()), kv = vec(k.data()), bv = vec(b.data());
    expect_close(vec(y.data()), oracle::naive_conv2d(g, xv, kv, bv));

    Tensor dy = random_tensor(y.shape(), rng);
    backward(sum_all(mul(y, dy)));
    auto ref = oracle::naive_conv2d_grads(g, xv, kv, vec(dy.data()));
    expect_close(vec(x.grad()), ref.dx);
    expect_close(vec(k.grad()), ref.dker);
    expect_close(vec(b.grad()), ref.dbias);
  }
}

TEST(Conv2d, ErrorsNameTheAxis) {
  try {
    conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor(), 1, 0);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.axis(), 1);
  }
  EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), Tensor(), 1, 0), DimensionError);
  EXPECT_NO_THROW(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), Tensor(), 1, 1));
}

TEST(Linear, IdentityAndBiasOnly) {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(vec(linear(x, eye, Tensor::zeros({3})).data()), vec(x.data()));
  Tensor y = linear(x, Tensor::zeros({2, 3}), Tensor({2}, {7, -1}));
  EXPECT_EQ(vec(y.data()), (std::vector<double>{7, -1, 7, -1}));
  EXPECT_THROW(linear(x, Tensor::zeros({2, 4}), Tensor()), DimensionError);
}

TEST(Linear, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  auto r = finite_difference_check(
      [](const std::vector<Tensor>& in) { return weighted_sum(linear(in[0], in[1], in[2]), 1); },
      {random_tensor({2, 3}, rng), random_tensor({4, 3}, rng), random_tensor({4}, rng)});
  EXPECT_TRUE(r.ok) << r.detail;
}

TEST(GlobalAveragePool, Values) {
  Tensor c = global_average_pool(Tensor::full({2, 3, 4, 5}, 0.25));
  for (double v : c.data()) EXPECT_EQ(v, 0.25);
  EXPECT_EQ(global_average_pool(Tensor({1, 1, 2, 2}, {0, 1, 2, 3})).item(), 1.5);
}

TEST(GlobalAveragePool, GradientIsUniform) {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({2, 3, 4, 5}, rng, true);
  backward(sum_all(global_average_pool(x)));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0 / 20.0);
}

TEST(Elementwise, KnownValues) {
  EXPECT_EQ(vec(relu(Tensor({3}, {-1, 0, 2})).data()), (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(sigmoid(Tensor({1}, {0})).item(), 0.5);
  EXPECT_THROW(log(Tensor({2}, {1.0, 0.0})), DomainError);
  EXPECT_THROW(log(Tensor({1}, {-2.0})), DomainError);
}

TEST(Elementwise, ClampHasZeroGradientOutsideRange) {
  Tensor x({4}, {-2.0, 0.1, 0.5, 3.0}, true);
  backward(sum_all(clamp(x, 0.0, 1.0)));
  EXPECT_EQ(vec(x.grad()), (std::vector<double>{0, 1, 1, 0}));
}

TEST(Elementwise, BroadcastRules) {
  Tensor a({2, 1}, {1, 2});
  Tensor b({1, 3}, {10, 20, 30});
  Tensor c = add(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 3}));
  EXPECT_EQ(vec(c.data()), (std::vector<double>{11, 21, 31, 12, 22, 32}));
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3})), DimensionError);
  EXPECT_EQ(vec(mul(Tensor::scalar(2.0), Tensor({2}, {1, 2})).data()), (std::vector<double>{2, 4}));
}

TEST(ChannelScale, IdentityZeroAndLoopOracle) {
  std::mt19937_64 rng(8);
  Tensor f = random_tensor({2, 3, 4, 4}, rng);
  EXPECT_EQ(vec(channel_scale(f, Tensor::full({2, 3}, 1.0)).data()), vec(f.data()));
  Tensor zeroed = channel_scale(f, Tensor::zeros({2, 3}));
  for (double v : zeroed.data()) EXPECT_EQ(v, 0.0);
  Tensor w = random_tensor({2, 3}, rng);
  expect_close(vec(channel_scale(f, w).data()), oracle::naive_channel_scale(2, 3, 16, vec(f.data()), vec(w.data())));
  EXPECT_THROW(channel_scale(f, Tensor::zeros({2, 4})), DimensionError);
}

TEST(Concat, LastAxisAndSingle) {
  Tensor c = concat({Tensor({1, 2}, {1, 2}), Tensor({1, 1}, {3})}, 1);
  EXPECT_EQ(c.shape(), (Shape{1, 3}));
  EXPECT_EQ(vec(c.data()), (std::vector<double>{1, 2, 3}));
  Tensor x({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(vec(concat({x}, 0).data()), vec(x.data()));
  EXPECT_THROW(concat({Tensor::zeros({2, 2}), Tensor::zeros({3, 3})}, 1), DimensionError);
}

TEST(Concat, BackwardSplitsOnes) {
  std::mt19937_64 rng(1);
  Tensor a = random_tensor({2, 1, 3}, rng, true), b = random_tensor({2, 4, 3}, rng, true),
         c = random_tensor({2, 2, 3}, rng, true);
  Tensor y = concat({a, b, c}, 1);
  EXPECT_EQ(y.shape(), (Shape{2, 7, 3}));
  backward(sum_all(y));
  for (const auto& t : {a, b, c}) {
    ASSERT_EQ(t.grad().size(), t.numel());
    for (double g : t.grad()) EXPECT_EQ(g, 1.0);
  }
}

TEST(PoolAndUpsample, KnownValues) {
  EXPECT_EQ(max_pool2(Tensor({1, 1, 2, 2}, {1, 2, 3, 4})).item(), 4.0);
  EXPECT_EQ(vec(upsample_nearest2(Tensor({1, 1, 1, 1}, {5})).data()), (std::vector<double>{5, 5, 5, 5}));
  try {
    max_pool2(Tensor::zeros({1, 1, 3, 4}));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.axis(), 2);
  }
}

TEST(PoolAndUpsample, TieRoutesToFirstOccurrence) {
  Tensor x({1, 1, 2, 2}, {0.5, 2.0, 2.0, 2.0}, true);
  backward(sum_all(max_pool2(x)));
  EXPECT_EQ(vec(x.grad()), (std::vector<double>{0, 1, 0, 0}));
}

TEST(Reduce, MeanAndPopulationVariance) {
  Tensor x({4}, {1, 2, 3, 4});
  EXPECT_EQ(mean(x, {0}).item(), 2.5);
  EXPECT_EQ(var(x, {0}).item(), 1.25);
  EXPECT_EQ(sum(x, {0}).item(), 10.0);
  Tensor m = mean(Tensor({2, 2}, {1, 2, 3, 4}), {1});
  EXPECT_EQ(m.shape(), (Shape{2, 1}));
  EXPECT_EQ(vec(m.data()), (std::vector<double>{1.5, 3.5}));
}

TEST(Backward, SumAndSquare) {
  Tensor x({3}, {1, -2, 0.5}, true);
  backward(sum_all(x));
  EXPECT_EQ(vec(x.grad()), (std::vector<double>{1, 1, 1}));
  x.zero_grad();
  backward(sum_all(mul(x, x)));
  EXPECT_EQ(vec(x.grad()), (std::vector<double>{2, -4, 1}));
}

TEST(Backward, RejectsNonScalar) {
  Tensor x({2}, {1, 2}, true);
  EXPECT_THROW(backward(mul(x, x)), DimensionError);
}

TEST(Backward, AccumulatesAcrossCallsAndIsDeterministic) {
  std::mt19937_64 rng(21);
  Tensor x = random_tensor({1, 2, 6, 6}, rng, true);
  Tensor k = random_tensor({3, 2, 3, 3}, rng, true);
  Tensor loss = sum_all(sigmoid(conv2d(relu(x), k, Tensor(), 1, 1)));
  backward(loss);
  const auto once = vec(k.grad());
  backward(loss);
  const auto twice = vec(k.grad());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(twice[i], 2.0 * once[i]);

  Tensor k2 = k.detach().set_requires_grad(true);
  Tensor k3 = k.detach().set_requires_grad(true);
  backward(sum_all(sigmoid(conv2d(relu(x), k2, Tensor(), 1, 1))));
  backward(sum_all(sigmoid(conv2d(relu(x), k3, Tensor(), 1, 1))));
  EXPECT_EQ(vec(k2.grad()), vec(k3.grad()));
  EXPECT_EQ(vec(k2.grad()), once);
}

TEST(Backward, CompositeGraphMatchesFiniteDifferences) {
  std::mt19937_64 rng(42);
  auto r = finite_difference_check(
      [](const std::vector<Tensor>& p) {
        Tensor h = relu(conv2d(p[0], p[1], p[2], 1, 1));
        Tensor flat = reshape(h, {1, h.numel()});
        return sum_all(sigmoid(linear(flat, p[3], p[4])));
      },
      {random_tensor({1, 2, 4, 4}, rng), random_tensor({2, 2, 3, 3}, rng), random_tensor({2}, rng),
       random_tensor({3, 32}, rng), random_tensor({3}, rng)});
  EXPECT_TRUE(r.ok) << r.detail;
}

TEST(ComputationTape, VisitsEachNodeOnceAndClears) {
  Tensor x({2}, {1, 2}, true);
  Tensor y = mul(x, x);
  Tensor loss = sum_all(add(y, y));  // y reached twice
  auto tape = ComputationTape::record(loss);
  std::set<const void*> seen;
  for (const auto& n : tape.order()) EXPECT_TRUE(seen.insert(n.get()).second);
  EXPECT_EQ(tape.order().back().get(), loss.node().get());
  tape.backward();
  EXPECT_EQ(vec(x.grad()), (std::vector<double>{4, 8}));
  tape.clear();
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_TRUE(loss.is_leaf());
}

TEST(NoGradGuard, SkipsRecording) {
  Tensor x({2}, {1, 2}, true);
  NoGradGuard guard;
  Tensor y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(MacCounter, CountsConvAndLinear) {
  MacCounter counter;
  conv2d(Tensor::zeros({1, 1, 8, 8}), Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1}), 1, 1);
  EXPECT_EQ(counter.macs(), 576u);
  linear(Tensor::zeros({2, 5}), Tensor::zeros({3, 5}), Tensor());
  EXPECT_EQ(counter.macs(), 576u + 30u);
}

// Property sweep: every primitive, random small shapes, central differences.
TEST(GradientProperty, AllPrimitivesAgreeWithFiniteDifferences) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    for (const auto& c : oracle::primitive_grad_cases(rng)) {
      const auto r = finite_difference_check(c.fn, c.inputs);
      EXPECT_TRUE(r.ok) << c.name << ": " << r.detail;
    }
  }
}

TEST(ForwardProperty, PrimitivesMatchLoopOracles) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> small(1, 5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = small(rng), c = small(rng), h = 2 * small(rng), w = 2 * small(rng);
    Tensor f = random_tensor({n, c, h, w}, rng);
    expect_close(vec(global_average_pool(f).data()), oracle::naive_gap(n, c, h * w, vec(f.data())));
    expect_close(vec(max_pool2(f).data()), oracle::naive_max_pool2(n * c, h, w, vec(f.data())));
    Tensor x = random_tensor({n, c}, rng), wt = random_tensor({3, c}, rng), b = random_tensor({3}, rng);
    expect_close(vec(linear(x, wt, b).data()), oracle::naive_linear(n, c, 3, vec(x.data()), vec(wt.data()), vec(b.data())));
  }
}
