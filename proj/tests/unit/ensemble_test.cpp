#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "stnet/ensemble.hpp"
#include "stnet/errors.hpp"
#include "stnet/rng.hpp"
#include "test_util.hpp"

namespace stnet {
namespace {

using test::TempDir;

PredictionSet preds(std::string id, std::vector<std::string> ids, std::vector<double> probs) {
  return {std::move(id), std::move(ids), std::move(probs)};
}

EnsembleSpec weighted(std::vector<double> w) { return {EnsembleStrategy::ValidationAccuracy, std::move(w)}; }

TEST(DeriveWeights, Examples) {
  const std::vector<double> three{0.9, 0.5, 0.7};
  for (double w : derive_weights(EnsembleStrategy::Average, three)) EXPECT_DOUBLE_EQ(w, 1.0 / 3.0);
  const std::vector<double> accs{0.8, 0.6};
  const auto w = derive_weights(EnsembleStrategy::ValidationAccuracy, accs);
  EXPECT_DOUBLE_EQ(w[0], 4.0 / 7.0);
  EXPECT_DOUBLE_EQ(w[1], 3.0 / 7.0);
  const std::vector<double> equal{0.6, 0.6, 0.6};
  const auto we = derive_weights(EnsembleStrategy::ValidationAccuracy, equal);
  const auto wa = derive_weights(EnsembleStrategy::Average, equal);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(we[i], wa[i], 1e-15);
}

TEST(DeriveWeights, Errors) {
  const std::vector<double> zeros{0.0, 0.0}, out_of_range{1.2, 0.5}, one_zero{0.0, 0.5};
  EXPECT_THROW(derive_weights(EnsembleStrategy::ValidationAccuracy, zeros), ArithmeticError);
  EXPECT_THROW(derive_weights(EnsembleStrategy::ValidationAccuracy, out_of_range), RangeError);
  EXPECT_THROW(derive_weights(EnsembleStrategy::ValidationAccuracy, one_zero), RangeError);
}

TEST(NormalizeWeights, SumsToOne) {
  const std::vector<double> w{2, 6};
  EXPECT_EQ(normalize_weights(w), (std::vector<double>{0.25, 0.75}));
  const std::vector<double> neg{-1, 2}, zero{0, 0}, empty;
  EXPECT_THROW(normalize_weights(neg), UsageError);
  EXPECT_THROW(normalize_weights(empty), UsageError);
  EXPECT_THROW(normalize_weights(zero), ArithmeticError);
}

TEST(Fuse, Examples) {
  const std::vector<PredictionSet> two{preds("a", {"x"}, {0.6}), preds("b", {"x"}, {0.8})};
  EXPECT_DOUBLE_EQ(fuse(two, weighted({0.5, 0.5})).probs[0], 0.7);
  const std::vector<PredictionSet> three{preds("a", {"x"}, {1.0}), preds("b", {"x"}, {0.0}),
                                         preds("c", {"x"}, {1.0})};
  EXPECT_DOUBLE_EQ(fuse(three, weighted({0.2, 0.3, 0.5})).probs[0], 0.7);
  const std::vector<PredictionSet> one{preds("a", {"x", "y"}, {0.3, 0.9})};
  const auto id = fuse(one, weighted({1.0}));
  EXPECT_EQ(id.probs, one[0].probs);
  EXPECT_EQ(id.ids, one[0].ids);
  EXPECT_EQ(id.model_id, "ensemble");
}

TEST(Fuse, AlignsIdsAcrossOrders) {
  const std::vector<PredictionSet> sets{preds("a", {"x", "y", "z"}, {0.1, 0.2, 0.3}),
                                        preds("b", {"z", "x", "y"}, {0.9, 0.5, 0.6})};
  const auto f = fuse(sets, weighted({0.5, 0.5}));
  EXPECT_EQ(f.ids, (std::vector<std::string>{"x", "y", "z"}));
  EXPECT_DOUBLE_EQ(f.probs[0], 0.3);
  EXPECT_DOUBLE_EQ(f.probs[1], 0.4);
  EXPECT_DOUBLE_EQ(f.probs[2], 0.6);
}

TEST(Fuse, Errors) {
  const std::vector<PredictionSet> mismatch{preds("a", {"x", "y"}, {0.1, 0.2}), preds("b", {"x", "q"}, {0.1, 0.2})};
  EXPECT_THROW(fuse(mismatch, weighted({0.5, 0.5})), DataError);
  const std::vector<PredictionSet> ok{preds("a", {"x"}, {0.1}), preds("b", {"x"}, {0.2})};
  EXPECT_THROW(fuse(ok, weighted({1.0})), UsageError);
  EXPECT_THROW(fuse(ok, weighted({0.7, 0.7})), UsageError);
  EXPECT_THROW(fuse(ok, weighted({1.5, -0.5})), UsageError);
  EXPECT_THROW(fuse(std::vector<PredictionSet>{}, weighted({})), UsageError);
  const std::vector<PredictionSet> bad{preds("a", {"x"}, {1.1})};
  EXPECT_THROW(fuse(bad, weighted({1.0})), DataError);
}

TEST(Fuse, TieIsSober) {
  const std::vector<PredictionSet> sets{preds("a", {"x"}, {0.4}), preds("b", {"x"}, {0.6})};
  const auto p = fuse(sets, weighted({0.5, 0.5})).probs[0];
  EXPECT_EQ(p, 0.5);
  EXPECT_FALSE(is_intoxicated(p));
  EXPECT_TRUE(is_intoxicated(std::nextafter(0.5, 1.0)));
}

TEST(Fuse, ConvexPermutationInvariantUnanimous) {
  Rng r(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + r.below(5), n = 1 + r.below(6);
    std::vector<PredictionSet> sets;
    std::vector<double> raw;
    for (std::size_t i = 0; i < m; ++i) {
      PredictionSet s{"m" + std::to_string(i), {}, {}};
      for (std::size_t j = 0; j < n; ++j) {
        s.ids.push_back("s" + std::to_string(j));
        s.probs.push_back(r.uniform(0.0, 1.0));
      }
      sets.push_back(s);
      raw.push_back(r.uniform(0.01, 1.0));
    }
    const auto w = normalize_weights(raw);
    const auto f = fuse(sets, weighted(w));
    for (std::size_t j = 0; j < n; ++j) {
      double lo = 1, hi = 0;
      bool all_pos = true;
      for (const auto& s : sets) {
        lo = std::min(lo, s.probs[j]);
        hi = std::max(hi, s.probs[j]);
        all_pos &= s.probs[j] > 0.5;
      }
      EXPECT_GE(f.probs[j], lo - 1e-15);
      EXPECT_LE(f.probs[j], hi + 1e-15);
      if (all_pos) EXPECT_TRUE(is_intoxicated(f.probs[j]));
    }
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    r.shuffle(std::span<std::size_t>(perm));
    std::vector<PredictionSet> ps;
    std::vector<double> pw;
    for (auto i : perm) {
      ps.push_back(sets[i]);
      pw.push_back(w[i]);
    }
    const auto g = fuse(ps, weighted(pw));
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(g.probs[j], f.probs[j], 1e-15);
  }
}

TEST(PredictionCsv, RoundTripIsExact) {
  TempDir dir;
  const auto p = preds("model", {"a", "b", "c"}, {0.1, 1.0 / 3.0, 0.9999999999999999});
  write_predictions(dir / "model.csv", p);
  const auto q = read_predictions(dir / "model.csv");
  EXPECT_EQ(q.model_id, "model");
  EXPECT_EQ(q.ids, p.ids);
  EXPECT_EQ(q.probs, p.probs);
  std::ifstream f(dir / "model.csv");
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "sample_id,p_intoxicated");
}

TEST(PredictionCsv, RejectsMalformedFiles) {
  TempDir dir;
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return dir / name;
  };
  EXPECT_THROW(read_predictions(write("h.csv", "id,p\na,0.5\n")), FormatError);
  EXPECT_THROW(read_predictions(write("f.csv", "sample_id,p_intoxicated\na,abc\n")), FormatError);
  EXPECT_THROW(read_predictions(write("e.csv", "")), FormatError);
  EXPECT_THROW(read_predictions(write("r.csv", "sample_id,p_intoxicated\na,1.5\n")), DataError);
  EXPECT_THROW(read_predictions(dir / "absent.csv"), Error);
}

}  // namespace
}  // namespace stnet
