#include <gtest/gtest.h>

#include <cmath>

#include "stnet/analysis.hpp"
#include "stnet/blocks.hpp"
#include "stnet/errors.hpp"
#include "stnet/verification.hpp"
#include "test_util.hpp"

namespace stnet {
namespace {

using test::random_tensor;

BlockSpec spec_of(BlockKind kind, std::size_t cin, std::size_t cout, Extent3 stride = {2, 2, 2}) {
  BlockSpec s;
  s.kind = kind;
  s.cin = cin;
  s.cout = cout;
  s.stride = stride;
  return s;
}

TEST(BlockKind, NamesRoundTrip) {
  for (auto k : kAllBlockKinds) EXPECT_EQ(parse_block_kind(block_kind_name(k)), k);
  EXPECT_THROW(parse_block_kind("block4"), UsageError);
}

TEST(BlockLayout, KernelsAndStrides) {
  const auto b2 = block_layout(spec_of(BlockKind::Block2, 3, 8));
  ASSERT_EQ(b2.size(), 1u);
  ASSERT_EQ(b2[0].convs.size(), 2u);
  EXPECT_EQ(b2[0].convs[0].kernel, kernels::plane_hw);
  EXPECT_EQ(b2[0].convs[0].stride, (Extent3{1, 2, 2}));
  EXPECT_EQ(b2[0].convs[0].padding, (Extent3{0, 1, 1}));
  EXPECT_EQ(b2[0].convs[1].kernel, kernels::axis_l);
  EXPECT_EQ(b2[0].convs[1].stride, (Extent3{2, 1, 1}));
  EXPECT_EQ(b2[0].convs[1].cin, 8u);
  EXPECT_FALSE(b2[0].relu_between);
  EXPECT_TRUE(block_layout(spec_of(BlockKind::Block2Plus, 3, 8))[0].relu_between);

  const auto b3 = block_layout(spec_of(BlockKind::Block3, 3, 8));
  ASSERT_EQ(b3.size(), 3u);
  for (const auto& br : b3) {
    EXPECT_TRUE(br.relu_after);
    EXPECT_EQ(br.convs[0].stride, (Extent3{2, 2, 2}));
  }
  EXPECT_EQ(block_layout(spec_of(BlockKind::Block1, 3, 8)).size(), 3u);
  EXPECT_THROW(block_layout(spec_of(BlockKind::Block1, 0, 8)), ShapeError);
}

TEST(Block, Block1DeltaKernelsTripleTheInput) {
  Rng r(1);
  Block<double> block(spec_of(BlockKind::Block1, 1, 1, {1, 1, 1}), r);
  for (auto* c : block.convs()) {
    c->weight().fill(0);
    const auto& k = c->spec().kernel;
    c->weight().at({0, 0, k.l / 2, k.h / 2, k.w / 2}) = 1.0;
  }
  const auto x = random_tensor<double>(r, {1, 1, 4, 4, 4}, 0.0, 1.0);
  Tensor<double> tripled = x;
  for (auto& v : tripled.data()) v *= 3.0;
  EXPECT_LE(max_abs_diff(block.forward(x, Mode::Eval), pool_oracle(PoolSpec{}, tripled)), 1e-12);
}

// With non-negative weights and input the intermediate ReLU never fires.
TEST(Block, Block2EqualsBlock2PlusWhenNonNegative) {
  Rng ra(2), rb(2), rx(3);
  Block<double> a(spec_of(BlockKind::Block2, 2, 3), ra), b(spec_of(BlockKind::Block2Plus, 2, 3), rb);
  for (auto* blk : {&a, &b})
    for (auto* c : blk->convs())
      for (auto& v : c->weight().data()) v = std::abs(v);
  const auto x = random_tensor<double>(rx, {2, 2, 5, 6, 6}, 0.0, 1.0);
  EXPECT_EQ(a.forward(x, Mode::Eval), b.forward(x, Mode::Eval));
}

TEST(Block, AllKindsProduceEqualShapes) {
  Rng r(4);
  for (const Extent3 in : {Extent3{16, 64, 64}, Extent3{5, 7, 3}, Extent3{2, 2, 2}}) {
    const auto x = random_tensor<float>(r, {1, 3, in.l, in.h, in.w});
    Shape expected;
    for (auto k : kAllBlockKinds) {
      Block<float> block(spec_of(k, 3, 4), r);
      const auto y = block.forward(x, Mode::Eval);
      if (expected.empty()) expected = y.shape();
      EXPECT_EQ(y.shape(), expected) << block_kind_name(k);
    }
  }
}

TEST(Block, AllocatedCountsMatchClosedForm) {
  Rng r(5);
  for (int i = 0; i < 100; ++i) {
    const std::size_t cin = 1 + r.below(12), cout = 1 + r.below(12);
    for (auto k : kAllBlockKinds) {
      Block<float> block(spec_of(k, cin, cout), r);
      EXPECT_EQ(block.weight_count(), block_weight_count(k, cin, cout)) << block_kind_name(k);
      EXPECT_EQ(block.bias_count(), block_bias_count(k, cout));
    }
  }
}

TEST(Block, FactorizedKindsUseFewerWeightsThanFull) {
  for (std::size_t c : {3, 16, 64, 128}) {
    const auto full = block_weight_count(BlockKind::Fully3D, c, c);
    EXPECT_EQ(block_weight_count(BlockKind::Block1, c, c), full);
    EXPECT_LT(block_weight_count(BlockKind::Block2, c, c), full);
    EXPECT_LT(block_weight_count(BlockKind::Block3, c, c), block_weight_count(BlockKind::Block2, c, c));
  }
}

TEST(Block, RejectsWrongChannels) {
  Rng r(6);
  Block<float> block(spec_of(BlockKind::Block3, 2, 2), r);
  EXPECT_THROW(block.forward(Tensor<float>({1, 3, 4, 4, 4}), Mode::Eval), ShapeError);
}

TEST(Block, SlotNames) {
  Rng r(7);
  Block<float> block(spec_of(BlockKind::Block2, 2, 2), r);
  Slots<float> s;
  block.collect("blocks.0", s);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[0].name, "blocks.0.branch0.conv0.weight");
  EXPECT_EQ(s[3].name, "blocks.0.branch0.conv1.bias");
}

class BlockOracle : public ::testing::TestWithParam<BlockKind> {};

TEST_P(BlockOracle, TwentyCases) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto rep = block_oracle_case(GetParam(), seed);
    EXPECT_TRUE(rep.passed) << rep.json();
  }
}

TEST_P(BlockOracle, GradcheckThreeSeeds) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto rep = gradcheck(GradTarget::Block, block_kind_name(GetParam()), seed);
    EXPECT_TRUE(rep.passed) << rep.json();
  }
}

INSTANTIATE_TEST_SUITE_P(All, BlockOracle, ::testing::ValuesIn(kAllBlockKinds),
                         [](const auto& info) { return std::string(block_kind_name(info.param)); });

}  // namespace
}  // namespace stnet
