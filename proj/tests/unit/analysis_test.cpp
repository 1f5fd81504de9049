#include <gtest/gtest.h>

#include "json.hpp"
#include "stnet/analysis.hpp"
#include "stnet/errors.hpp"
#include "test_util.hpp"

namespace stnet {
namespace {

TEST(CountParams, PublishedTotals) {
  EXPECT_EQ(count_params(video_arch("fully3d")).total_weights, 779328u);
  EXPECT_EQ(count_params(video_arch("two-block1")).total_weights, 779328u);
  EXPECT_EQ(count_params(video_arch("two-block2")).total_weights, 435264u);
  EXPECT_EQ(count_params(video_arch("two-block2plus")).total_weights, 435264u);
  EXPECT_EQ(count_params(video_arch("three-block2")).total_weights, 373824u);
  EXPECT_EQ(count_params(video_arch("three-block2plus")).total_weights, 373824u);
  EXPECT_EQ(count_params(video_arch("two-block3")).total_weights, 336960u);
}

TEST(CountParams, DecreaseFactors) {
  EXPECT_EQ(count_params(video_arch("fully3d")).decrease_factor, 1.0);
  EXPECT_EQ(round1(count_params(video_arch("two-block2")).decrease_factor), 1.8);
  EXPECT_EQ(round1(count_params(video_arch("three-block2plus")).decrease_factor), 2.1);
  EXPECT_EQ(round1(count_params(video_arch("two-block3")).decrease_factor), 2.3);
  EXPECT_NEAR(count_params(video_arch("two-block2")).decrease_factor, 779328.0 / 435264.0, 1e-15);
}

TEST(CountParams, TotalsAreSumsOfBlocks) {
  for (const auto& name : video_arch_names()) {
    const auto r = count_params(video_arch(name, {3, 5, 7, 11, 13}));
    std::uint64_t w = 0, b = 0;
    for (const auto& blk : r.per_block) {
      w += blk.weights;
      b += blk.biases;
    }
    EXPECT_EQ(r.total_weights, w);
    EXPECT_EQ(r.total_biases, b);
    EXPECT_EQ(r.per_block.size(), 4u);
  }
}

TEST(CountParams, MatchesAllocatedWeights) {
  for (const auto& name : video_arch_names()) {
    const ChannelLadder ladder{3, 4, 6, 5, 8};
    Rng r(1);
    VideoNet<float> net(video_arch(name, ladder), r);
    EXPECT_EQ(count_params(net.arch()).total_weights, net.conv_weight_count()) << name;
  }
}

TEST(CountParams, KindEqualities) {
  Rng r(2);
  for (int i = 0; i < 200; ++i) {
    const auto ci = 1 + r.below(300), co = 1 + r.below(300);
    EXPECT_EQ(block_weight_count(BlockKind::Block2, ci, co), block_weight_count(BlockKind::Block2Plus, ci, co));
    EXPECT_EQ(block_weight_count(BlockKind::Fully3D, ci, co), block_weight_count(BlockKind::Block1, ci, co));
    EXPECT_EQ(block_weight_count(BlockKind::Block2, ci, co), 9 * ci * co + 3 * co * co);
    EXPECT_EQ(block_weight_count(BlockKind::Block3, ci, co), 9 * ci * co);
  }
}

TEST(DecreaseFactor, ZeroTotalIsArithmeticError) {
  ParamReport zero, base;
  base.total_weights = 10;
  EXPECT_THROW(decrease_factor(zero, base), ArithmeticError);
  EXPECT_EQ(decrease_factor(base, base), 1.0);
}

TEST(Round1, OneDecimal) {
  EXPECT_EQ(round1(1.79), 1.8);
  EXPECT_EQ(round1(2.0848), 2.1);
  EXPECT_EQ(round1(2.3128), 2.3);
}

TEST(CountFlops, SingleConvExample) {
  // 1x1x1 input, stride 2, pad 1: one output position, 27 taps x 3 in x 2 out.
  const auto arch = video_arch("fully3d", {3, 2, 2, 2, 2});
  EXPECT_EQ(conv_layer_flops(arch, {1, 1, 1}).front(), 162u);
}

TEST(CountFlops, ThreeDimensionalIsCostliest) {
  for (const Extent3 in : {Extent3{16, 64, 64}, Extent3{8, 32, 32}, Extent3{4, 20, 12}}) {
    const auto full = count_flops(video_arch("fully3d"), in);
    EXPECT_LT(count_flops(video_arch("two-block3"), in), full);
    EXPECT_LT(count_flops(video_arch("two-block2"), in), full);
    EXPECT_EQ(count_flops(video_arch("two-block1"), in), full);
  }
}

// W = 256 and 512 both halve exactly through every stride-2 conv and pool.
TEST(CountFlops, DoublingWidthDoublesEveryLayer) {
  for (const auto& name : video_arch_names()) {
    const auto a = conv_layer_flops(video_arch(name), {16, 16, 256});
    const auto b = conv_layer_flops(video_arch(name), {16, 16, 512});
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b[i], 2 * a[i]) << name << " layer " << i;
  }
}

TEST(ReportJson, KeysInDocumentedOrder) {
  auto r = count_params(video_arch("two-block3"));
  r.flops = 42;
  const auto j = nlohmann::ordered_json::parse(report_json(r));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"name", "per_block", "total_weights", "total_biases", "decrease_factor",
                                            "flops"}));
  EXPECT_EQ(j["total_weights"], 336960);
  EXPECT_EQ(j["per_block"].size(), 4u);
  EXPECT_EQ(j["per_block"][3]["kind"], "block3");
  r.flops.reset();
  EXPECT_FALSE(nlohmann::json::parse(report_json(r)).contains("flops"));
}

}  // namespace
}  // namespace stnet
