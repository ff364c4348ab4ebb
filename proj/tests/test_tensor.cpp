#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <set>

#include "test_util.hpp"

using namespace acgan;
using testutil::random_tensor;

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor<float>::from_data({2, 3}, std::vector<float>(5)), DimensionError);
  auto t = Tensor<float>::from_data({2, 3}, std::vector<float>(6, 1.0f));
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
}

TEST(Tensor, NonFiniteValuesAreRejected) {
  EXPECT_THROW(Tensor<float>::from_data({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()}), NonFiniteError);
  EXPECT_THROW(Tensor<double>::from_data({1}, {std::numeric_limits<double>::infinity()}), NonFiniteError);
}

TEST(Tensor, InteriorNodesCannotBeMutated) {
  auto x = Tensor<double>::full({2}, 1.0, true);
  auto y = add(x, x);
  EXPECT_THROW(y.mutable_data(), GraphError);
}

TEST(Backward, SumGivesOnes) {
  auto x = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwoX) {
  auto x = Tensor<double>::from_data({4}, {-1.5, 0.0, 2.0, 3.25}, true);
  backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2 * x.data()[i]);
}

TEST(Backward, ValueUsedTwiceAccumulatesBothPaths) {
  auto x = Tensor<double>::from_data({3}, {1, 2, 3}, true);
  backward(sum(add(x, x)));
  for (double g : x.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Backward, GradientsAccumulateAcrossCalls) {
  auto x = Tensor<double>::from_data({2}, {1, 2}, true);
  backward(sum(x));
  backward(sum(scale(x, 3.0)));
  for (double g : x.grad()) EXPECT_EQ(g, 4.0);
  x.clear_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Backward, NonScalarLossIsRejected) {
  auto x = Tensor<double>::from_data({2}, {1, 2}, true);
  EXPECT_THROW(backward(mul(x, x)), DimensionError);
}

TEST(Backward, SecondBackwardOnSameGraphIsRejected) {
  auto x = Tensor<double>::from_data({2}, {1, 2}, true);
  auto loss = sum(mul(x, x));
  backward(loss);
  EXPECT_THROW(backward(loss), GraphError);
  // Re-recording the forward pass works.
  x.clear_grad();
  backward(sum(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(Backward, SharedSubgraphConsumedByEarlierPassIsRejected) {
  auto x = Tensor<double>::from_data({2}, {1, 2}, true);
  auto h = mul(x, x);
  backward(sum(h));
  EXPECT_THROW(backward(sum(scale(h, 2.0))), GraphError);
}

TEST(Backward, LossWithoutTrainableInputsIsRejected) {
  auto x = Tensor<double>::from_data({2}, {1, 2});
  EXPECT_THROW(backward(sum(x)), GraphError);
}

TEST(Backward, LeafScalarLoss) {
  auto x = Tensor<double>::scalar(3.0, true);
  backward(x);
  EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(GradTape, TopologicalAndEachNodeVisitedOnce) {
  std::mt19937_64 rng(3);
  auto x = random_tensor<double>(rng, {3, 4});
  auto w = random_tensor<double>(rng, {4, 2});
  auto b = random_tensor<double>(rng, {2});
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  auto h = linear(x, w, b);
  auto loss = sum(add(tanh(h), mul(h, h)));  // h feeds two branches
  GradTape<double> tape(loss);
  const auto& nodes = tape.nodes();
  std::set<const void*> distinct;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    distinct.insert(nodes[i].get());
    for (const auto& op : nodes[i]->operands) {
      if (op->is_leaf()) continue;
      auto pos = std::find(nodes.begin(), nodes.end(), op);
      ASSERT_NE(pos, nodes.end());
      EXPECT_LT(static_cast<std::size_t>(pos - nodes.begin()), i) << "operand after its consumer";
    }
  }
  EXPECT_EQ(distinct.size(), nodes.size());
  EXPECT_EQ(nodes.size(), 5u);  // linear, tanh, mul, add, sum
  tape.run();
  EXPECT_EQ(tape.visits(), nodes.size());
}

TEST(Tensor, DetachStopsGradient) {
  auto x = Tensor<double>::from_data({2}, {1, 2}, true);
  auto y = Tensor<double>::from_data({2}, {3, 4}, true);
  backward(sum(mul(x.detach(), y)));
  EXPECT_FALSE(x.has_grad());
  EXPECT_EQ(y.grad()[0], 1.0);
}

TEST(Tensor, NoGraphIsRecordedWithoutRequiresGrad) {
  auto x = Tensor<double>::from_data({2}, {1, 2});
  auto y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.handle()->is_leaf());
}

TEST(Determinism, IdenticalInputsGiveBitwiseIdenticalOutputs) {
  auto run = [] {
    std::mt19937_64 rng(11);
    auto x = random_tensor<float>(rng, {2, 3, 9, 9});
    auto k = random_tensor<float>(rng, {4, 3, 3, 3});
    auto b = random_tensor<float>(rng, {4});
    auto y = conv2d(x, k, b, 2, 1);
    return std::vector<float>(y.data().begin(), y.data().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Determinism, ResultsDoNotDependOnBufferPlacement) {
  // Interleaved odd-sized allocations move the tensors to differently aligned addresses.
  std::vector<std::unique_ptr<char[]>> junk;
  std::vector<float> first;
  for (int trial = 0; trial < 12; ++trial) {
    junk.push_back(std::make_unique<char[]>(16 * trial + 8));
    std::mt19937_64 rng(5);
    auto x = random_tensor<float>(rng, {3, 37});
    auto w = random_tensor<float>(rng, {37, 1});
    auto b = random_tensor<float>(rng, {1});
    auto img = random_tensor<float>(rng, {2, 3, 6, 6});
    auto k = random_tensor<float>(rng, {2, 3, 3, 3});
    auto kb = random_tensor<float>(rng, {2});
    k.set_requires_grad(true);
    kb.set_requires_grad(true);
    w.set_requires_grad(true);
    auto loss = add(sum(linear(x, w, b)), sum(mul(conv2d(img, k, kb, 1, 1), conv2d(img, k, kb, 1, 1))));
    backward(loss);
    std::vector<float> out{loss.item()};
    for (const auto* t : {&w, &k, &kb}) out.insert(out.end(), t->grad().begin(), t->grad().end());
    if (trial == 0)
      first = out;
    else
      ASSERT_EQ(out, first) << "trial " << trial;
  }
}
