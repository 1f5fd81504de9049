#include <gtest/gtest.h>

#include <cmath>

#include "json.hpp"
#include "stnet/analysis.hpp"
#include "stnet/errors.hpp"
#include "stnet/verification.hpp"
#include "test_util.hpp"

namespace stnet {
namespace {

using test::random_tensor;

TEST(RelErr, Floor) {
  EXPECT_EQ(rel_err(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(rel_err(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(rel_err(0.0, 1e-13), 0.1);
}

TEST(FiniteDiff, Quadratic) {
  const auto g = finite_diff([](std::span<const double> p) { return p[0] * p[0] + p[1] * p[1]; }, {1.0, 2.0}, 1e-5);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_NEAR(g[0], 2.0, 1e-9);
  EXPECT_NEAR(g[1], 4.0, 1e-9);
  EXPECT_THROW(finite_diff([](std::span<const double>) { return 0.0; }, {1.0}, 0.0), RangeError);
}

TEST(ConvOracle, HandExample) {
  ConvSpec spec;
  spec.kernel = kernels::axis_w;
  spec.padding = {0, 0, 1};
  const Tensor<double> x({1, 1, 1, 1, 3}, {1, 2, 3});
  const Tensor<double> w({1, 1, 1, 1, 3}, {1, 10, 100});
  const Tensor<double> b({1}, {0.5});
  // Cross-correlation with one zero on each side.
  EXPECT_EQ(conv_oracle(spec, w, &b, x), Tensor<double>({1, 1, 1, 1, 3}, {210.5, 321.5, 32.5}));
}

TEST(PoolOracle, HandExample) {
  const Tensor<double> x({1, 1, 1, 1, 5}, {1, 3, 2, 5, 4});
  EXPECT_EQ(pool_oracle(PoolSpec{}, x), Tensor<double>({1, 1, 1, 1, 3}, {3, 5, 4}));
}

TEST(LstmOracle, AgreesWithLayerInFloat) {
  Rng r(2);
  Lstm<float> lstm(3, 2, r);
  const auto x = random_tensor<float>(r, {2, 4, 3});
  EXPECT_LE(max_abs_diff(lstm.forward(x, Mode::Eval).outputs, lstm_oracle(lstm, x)), 1e-6f);
}

TEST(OracleReport, JsonKeysSorted) {
  OracleReport rep{"conv/x", 1e-12, 0.0, 1e-10, true, 3, "ok"};
  const auto j = nlohmann::ordered_json::parse(rep.json());
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
  EXPECT_EQ(j["case_id"], "conv/x");
  EXPECT_EQ(j["passed"], true);
  EXPECT_EQ(j["seed"], 3);
}

TEST(Gradcheck, NamesAndTargets) {
  EXPECT_EQ(parse_grad_target("layer"), GradTarget::Layer);
  EXPECT_EQ(grad_target_name(GradTarget::Model), "model");
  EXPECT_THROW(parse_grad_target("net"), UsageError);
  EXPECT_THROW(gradcheck(GradTarget::Layer, "softmax2", 1), UsageError);
  EXPECT_THROW(gradcheck(GradTarget::Block, "block9", 1), UsageError);
  EXPECT_EQ(gradcheck_model_names(), arch_names());
}

TEST(Gradcheck, ReportsSeedAndTolerance) {
  const auto rep = gradcheck(GradTarget::Layer, "linear", 7);
  EXPECT_EQ(rep.seed, 7u);
  EXPECT_EQ(rep.tolerance, kGradTol);
  EXPECT_TRUE(rep.passed);
  EXPECT_NE(rep.detail.find("worst"), std::string::npos);
}

// A deliberately wrong tolerance must be able to fail.
TEST(Gradcheck, ImpossibleToleranceFails) {
  GradcheckOptions o;
  o.tol = 0.0;
  o.abs_floor = 0.0;
  EXPECT_FALSE(gradcheck(GradTarget::Layer, "conv3d", 1, o).passed);
}

TEST(PublishedCounts, AuditPasses) {
  const auto reports = table2_audit();
  EXPECT_EQ(reports.size(), table2_rows().size());
  EXPECT_EQ(reports.size(), video_arch_names().size());
  for (const auto& r : reports) EXPECT_TRUE(r.passed) << r.json();
}

TEST(PublishedCounts, PrintedValuesWithinOnePercent) {
  for (const auto& row : table2_rows()) {
    const double total = static_cast<double>(count_params(video_arch(row.arch)).total_weights);
    EXPECT_LE(std::abs(total - row.published_total) / row.published_total, 0.01) << row.arch;
    if (row.published_factor > 0)
      EXPECT_EQ(round1(count_params(video_arch(row.arch)).decrease_factor), row.published_factor) << row.arch;
  }
}

}  // namespace
}  // namespace stnet
