#include <gtest/gtest.h>

#include <cmath>

#include "stnet/errors.hpp"
#include "stnet/layers.hpp"
#include "stnet/verification.hpp"
#include "test_util.hpp"

namespace stnet {
namespace {

using test::random_tensor;

ConvSpec conv(std::size_t cin, std::size_t cout, Extent3 k, Extent3 s, Extent3 p, bool bias = true) {
  ConvSpec c;
  c.cin = cin;
  c.cout = cout;
  c.kernel = k;
  c.stride = s;
  c.padding = p;
  c.bias = bias;
  return c;
}

TEST(ConvSpec, OutputExtentFormula) {
  const auto c = conv(1, 1, {3, 3, 3}, {2, 2, 2}, {1, 1, 1});
  EXPECT_EQ(c.output_extent({16, 64, 64}), (Extent3{8, 32, 32}));
  EXPECT_EQ(c.output_extent({1, 1, 1}), (Extent3{1, 1, 1}));
  EXPECT_EQ(c.output_extent({5, 4, 3}), (Extent3{3, 2, 2}));
  EXPECT_THROW(conv(1, 1, {3, 3, 3}, {1, 1, 1}, {0, 0, 0}).output_extent({2, 3, 3}), ShapeError);
  EXPECT_THROW(conv(0, 1, {3, 3, 3}, {1, 1, 1}, {0, 0, 0}).validate(), ShapeError);
}

TEST(Conv, AllOnesCenterIs27) {
  const auto spec = conv(1, 1, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, false);
  const Tensor<float> x({1, 1, 3, 3, 3}, 1.0f), w(spec.weight_shape(), 1.0f);
  const auto y = conv3d_forward<float>(spec, w, nullptr, x);
  EXPECT_EQ(y.at({0, 0, 1, 1, 1}), 27.0f);
  EXPECT_EQ(y.at({0, 0, 0, 0, 0}), 8.0f);
}

TEST(Conv, DeltaKernelIsIdentity) {
  Rng r(1);
  const auto spec = conv(1, 1, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, false);
  Tensor<float> w(spec.weight_shape());
  w.at({0, 0, 1, 1, 1}) = 1.0f;
  const auto x = random_tensor<float>(r, {1, 1, 4, 5, 3});
  EXPECT_EQ(conv3d_forward<float>(spec, w, nullptr, x), x);
}

TEST(Conv, RejectsChannelMismatch) {
  const auto spec = conv(2, 1, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
  const Tensor<float> w(spec.weight_shape()), b({1});
  EXPECT_THROW(conv3d_forward<float>(spec, w, &b, Tensor<float>({1, 3, 3, 3, 3})), ShapeError);
}

TEST(Conv, RandomMatchesOracleFloat) {
  Rng r(4);
  const auto spec = conv(2, 3, {3, 3, 3}, {2, 2, 2}, {1, 1, 1});
  const auto x = random_tensor<float>(r, {1, 2, 4, 5, 5});
  const auto w = random_tensor<float>(r, spec.weight_shape());
  const auto b = random_tensor<float>(r, {3});
  const auto y = conv3d_forward(spec, w, &b, x);
  EXPECT_LE(max_abs_diff(y, conv_oracle(spec, w, &b, x)), 1e-5f);
}

// Every kernel variant, both widths, 20 seeds each, extents <= 6.
TEST(Conv, VariantsMatchOracle) {
  const Extent3 variants[] = {kernels::full,   kernels::plane_hw, kernels::plane_lh, kernels::plane_lw,
                              kernels::axis_l, kernels::axis_h,   kernels::axis_w};
  for (const auto& k : variants)
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto rep = conv_oracle_case(seed, k);
      EXPECT_TRUE(rep.passed) << rep.json();
      Rng r(seed);
      const auto spec = conv(2, 2, k, {1 + seed % 2, 1, 2}, {k.l / 2, k.h / 2, k.w / 2});
      const auto x = random_tensor<float>(r, {1, 2, 5, 6, 4});
      const auto w = random_tensor<float>(r, spec.weight_shape());
      const auto b = random_tensor<float>(r, {2});
      EXPECT_LE(max_abs_diff(conv3d_forward(spec, w, &b, x), conv_oracle(spec, w, &b, x)), 1e-5f);
    }
}

TEST(Conv, ZeroGradOutGivesZeroGrads) {
  Rng r(5);
  const auto spec = conv(2, 2, {3, 3, 3}, {1, 2, 1}, {1, 1, 1});
  const auto x = random_tensor<double>(r, {1, 2, 3, 4, 4});
  const auto w = random_tensor<double>(r, spec.weight_shape());
  const auto y = conv3d_forward<double>(spec, w, nullptr, x);
  const auto g = conv3d_backward(spec, w, x, Tensor<double>(y.shape()));
  for (const auto* t : {&g.input, &g.weight, &g.bias})
    for (double v : t->data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(g.input.shape(), x.shape());
  EXPECT_EQ(g.weight.shape(), w.shape());
}

// With x = 1 and grad_out = 1, dL/dw[tap] counts the output positions whose
// tap lands inside the unpadded input.
TEST(Conv, WeightGradCountsValidPositions) {
  const auto spec = conv(1, 1, {3, 3, 3}, {2, 1, 2}, {1, 1, 1});
  const Extent3 in{4, 3, 5};
  const Tensor<double> x({1, 1, in.l, in.h, in.w}, 1.0), w(spec.weight_shape(), 0.5);
  const auto out = spec.output_extent(in);
  const Tensor<double> gy({1, 1, out.l, out.h, out.w}, 1.0);
  const auto g = conv3d_backward(spec, w, x, gy);
  auto valid = [](std::size_t o, std::size_t s, std::size_t d, std::size_t p, std::size_t n) {
    const long i = static_cast<long>(o * s + d) - static_cast<long>(p);
    return i >= 0 && i < static_cast<long>(n);
  };
  for (std::size_t dl = 0; dl < 3; ++dl)
    for (std::size_t dh = 0; dh < 3; ++dh)
      for (std::size_t dw = 0; dw < 3; ++dw) {
        double count = 0;
        for (std::size_t ol = 0; ol < out.l; ++ol)
          for (std::size_t oh = 0; oh < out.h; ++oh)
            for (std::size_t ow = 0; ow < out.w; ++ow)
              count += valid(ol, 2, dl, 1, in.l) && valid(oh, 1, dh, 1, in.h) && valid(ow, 2, dw, 1, in.w);
        EXPECT_EQ(g.weight.at({0, 0, dl, dh, dw}), count);
      }
  EXPECT_EQ(g.bias[0], static_cast<double>(out.volume()));
}

TEST(Conv, TranslationEquivariantOnInterior) {
  Rng r(6);
  const auto spec = conv(1, 1, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, false);
  const auto w = random_tensor<double>(r, spec.weight_shape());
  const auto x = random_tensor<double>(r, {1, 1, 6, 6, 6});
  Tensor<double> shifted(x.shape());
  for (std::size_t l = 0; l < 6; ++l)
    for (std::size_t h = 0; h < 6; ++h)
      for (std::size_t v = 1; v < 6; ++v) shifted.at({0, 0, l, h, v}) = x.at({0, 0, l, h, v - 1});
  const auto y = conv3d_forward<double>(spec, w, nullptr, x);
  const auto ys = conv3d_forward<double>(spec, w, nullptr, shifted);
  for (std::size_t l = 1; l < 5; ++l)
    for (std::size_t h = 1; h < 5; ++h)
      for (std::size_t v = 2; v < 5; ++v) EXPECT_NEAR(ys.at({0, 0, l, h, v}), y.at({0, 0, l, h, v - 1}), 1e-12);
}

TEST(Conv, LayerAccumulatesGradsAndNamesSlots) {
  Rng r(7);
  Conv3d<double> c(conv(2, 3, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}), r);
  for (double v : c.bias().data()) EXPECT_EQ(v, 0.0);
  const double bound = std::sqrt(6.0 / (2 * 9));
  for (double v : c.weight().data()) EXPECT_LE(std::abs(v), bound);
  const auto x = random_tensor<double>(r, {2, 2, 2, 3, 3});
  const auto y = c.forward(x, Mode::Train);
  const Tensor<double> g(y.shape(), 1.0);
  c.backward(g);
  const auto once = c.weight_grad();
  c.forward(x, Mode::Train);
  c.backward(g);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(c.weight_grad()[i], 2 * once[i]);
  Slots<double> s;
  c.collect("b", s);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].name, "b.weight");
  EXPECT_EQ(s[1].name, "b.bias");
}

TEST(Pool, ExamplesAndShapes) {
  Tensor<double> x({1, 1, 2, 2, 2});
  for (std::size_t i = 0; i < 8; ++i) x[i] = static_cast<double>(i);
  const auto r = maxpool3d_forward(PoolSpec{}, x);
  EXPECT_EQ(r.output.shape(), (Shape{1, 1, 1, 1, 1}));
  EXPECT_EQ(r.output[0], 7.0);
  EXPECT_EQ(r.argmax[0], 7u);
  const PoolSpec p;
  EXPECT_EQ(p.output_extent({1, 5, 4}), (Extent3{1, 3, 2}));
  EXPECT_EQ(p.output_extent({3, 2, 7}), (Extent3{2, 1, 4}));
}

TEST(Pool, MatchesWindowScanOracle) {
  Rng r(8);
  const auto x = random_tensor<double>(r, {1, 1, 5, 5, 5});
  EXPECT_EQ(maxpool3d_forward(PoolSpec{}, x).output, pool_oracle(PoolSpec{}, x));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto rep = pool_oracle_case(seed);
    EXPECT_TRUE(rep.passed) << rep.json();
  }
}

TEST(Pool, BackwardScattersToWinners) {
  Tensor<double> x({1, 1, 1, 2, 4}, std::vector<double>{1, 5, 2, 0, 3, 4, 9, 8});
  MaxPool3d<double> pool;
  const auto y = pool.forward(x, Mode::Train);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1, 2}));
  const auto g = pool.backward(Tensor<double>(y.shape(), std::vector<double>{10, 20}));
  EXPECT_EQ(g, Tensor<double>(x.shape(), std::vector<double>{0, 10, 0, 0, 0, 0, 20, 0}));
}

TEST(Pool, TiesGoToLowestIndex) {
  const Tensor<double> x({1, 1, 2, 2, 2}, 3.0);
  MaxPool3d<double> pool;
  const auto y = pool.forward(x, Mode::Train);
  const auto g = pool.backward(Tensor<double>(y.shape(), 1.0));
  EXPECT_EQ(g[0], 1.0);
  EXPECT_EQ(g.sum(), 1.0);
}

TEST(Relu, ForwardBackward) {
  ReLU<double> relu;
  const Tensor<double> x({3}, {-1, 0, 2});
  EXPECT_EQ(relu.forward(x, Mode::Train), Tensor<double>({3}, {0, 0, 2}));
  EXPECT_EQ(relu.backward(Tensor<double>({3}, 1.0)), Tensor<double>({3}, {0, 0, 1}));
  EXPECT_EQ(relu.kink_margin(), 1.0);
}

TEST(BatchNorm, TrainingOutputIsStandardized) {
  Rng r(10);
  BatchNorm<double> bn(3);
  const auto x = random_tensor<double>(r, {4, 3, 2, 3, 2}, -3, 5);
  const auto y = bn.forward(x, Mode::Train);
  const std::size_t per = 2 * 3 * 2;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, sq = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < per; ++i) mean += y[(n * 3 + c) * per + i];
    mean /= 4 * per;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < per; ++i) sq += std::pow(y[(n * 3 + c) * per + i] - mean, 2);
    EXPECT_NEAR(mean, 0.0, 1e-4);
    EXPECT_NEAR(sq / (4 * per), 1.0, 1e-4);
  }
}

TEST(BatchNorm, RunningStatsUseMomentumAndUnbiasedVariance) {
  BatchNorm<double> bn(1);
  const Tensor<double> x({4, 1}, {1, 2, 3, 6});
  bn.forward(x, Mode::Train);
  // mean 3, unbiased variance 14/3
  EXPECT_NEAR(bn.running_mean()[0], 0.1 * 3.0, 1e-12);
  EXPECT_NEAR(bn.running_var()[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-12);
  const auto y = bn.forward(Tensor<double>({1, 1}, {0.3}), Mode::Eval);
  EXPECT_NEAR(y[0], (0.3 - 0.3) / std::sqrt(bn.running_var()[0] + 1e-5), 1e-12);
}

TEST(BatchNorm, SingletonBatchIsRejectedInTraining) {
  BatchNorm<double> bn(2);
  EXPECT_THROW(bn.forward(Tensor<double>({1, 2}), Mode::Train), DataError);
  EXPECT_NO_THROW(bn.forward(Tensor<double>({1, 2}), Mode::Eval));
}

TEST(BatchNorm, SequenceAxis) {
  Rng r(12);
  BatchNorm<double> bn(4, 2);
  const auto x = random_tensor<double>(r, {2, 5, 4});
  const auto y = bn.forward(x, Mode::Train);
  for (std::size_t d = 0; d < 4; ++d) {
    double mean = 0;
    for (std::size_t i = 0; i < 10; ++i) mean += y[i * 4 + d];
    EXPECT_NEAR(mean / 10, 0.0, 1e-10);
  }
  EXPECT_THROW(bn.forward(Tensor<double>({2, 5, 3}), Mode::Train), ShapeError);
}

TEST(Dropout, EvalIsIdentityTrainIsInvertedAndSeeded) {
  Rng r(13);
  const auto x = random_tensor<double>(r, {50, 40}, 0.5, 1.0);
  Dropout<double> a(0.5, 99), b(0.5, 99);
  EXPECT_EQ(a.forward(x, Mode::Eval), x);
  const auto ya = a.forward(x, Mode::Train);
  EXPECT_EQ(ya, b.forward(x, Mode::Train));
  std::size_t kept = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (ya[i] != 0.0) {
      EXPECT_DOUBLE_EQ(ya[i], 2.0 * x[i]);
      ++kept;
    }
  }
  EXPECT_NEAR(static_cast<double>(kept) / x.size(), 0.5, 0.05);
  a.freeze_mask(true);
  EXPECT_EQ(a.forward(x, Mode::Train), ya);
  EXPECT_THROW(Dropout<double>(1.0), RangeError);
}

TEST(Linear, ForwardDefinition) {
  Rng r(14);
  Linear<double> lin(3, 2, r);
  const auto x = random_tensor<double>(r, {4, 3});
  lin.bias()[1] = 0.25;
  const auto y = lin.forward(x, Mode::Eval);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t o = 0; o < 2; ++o) {
      double acc = lin.bias()[o];
      for (std::size_t i = 0; i < 3; ++i) acc += x.at({n, i}) * lin.weight().at({o, i});
      EXPECT_NEAR(y.at({n, o}), acc, 1e-14);
    }
  EXPECT_THROW(lin.forward(Tensor<double>({4, 2}), Mode::Eval), ShapeError);
}

TEST(Lstm, ZeroWeightsAndInputsGiveZeroStates) {
  Rng r(15);
  Lstm<double> lstm(2, 3, r);
  lstm.w_ih().fill(0);
  lstm.w_hh().fill(0);
  lstm.bias().fill(0);
  const auto res = lstm.forward(Tensor<double>({2, 4, 2}), Mode::Eval);
  for (double v : res.outputs.data()) EXPECT_EQ(v, 0.0);
  for (double v : res.final_hidden.data()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, SingleStepIsOneCell) {
  Rng r(16);
  Lstm<double> lstm(1, 1, r);
  const Tensor<double> x({1, 1, 1}, {0.7});
  const double wi[4] = {lstm.w_ih()[0], lstm.w_ih()[1], lstm.w_ih()[2], lstm.w_ih()[3]};
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double i = sig(wi[0] * 0.7), g = std::tanh(wi[2] * 0.7), o = sig(wi[3] * 0.7);
  const double h = o * std::tanh(i * g);
  const auto res = lstm.forward(x, Mode::Eval);
  EXPECT_NEAR(res.final_hidden[0], h, 1e-15);
  EXPECT_EQ(res.outputs[0], res.final_hidden[0]);
}

TEST(Lstm, MatchesUnrolledOracle) {
  Rng r(17);
  Lstm<double> lstm(2, 2, r);
  const auto x = random_tensor<double>(r, {1, 3, 2});
  EXPECT_LE(max_abs_diff(lstm.forward(x, Mode::Eval).outputs, lstm_oracle(lstm, x)), 1e-6);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto rep = lstm_oracle_case(seed);
    EXPECT_TRUE(rep.passed) << rep.json();
  }
  EXPECT_THROW(lstm.forward(Tensor<double>({1, 3, 3}), Mode::Eval), ShapeError);
}

class LayerGradcheck : public ::testing::TestWithParam<std::string> {};

TEST_P(LayerGradcheck, ThreeSeeds) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto rep = gradcheck(GradTarget::Layer, GetParam(), seed);
    EXPECT_TRUE(rep.passed) << rep.json();
    EXPECT_LE(rep.max_rel_err, 1e-6);
  }
}

INSTANTIATE_TEST_SUITE_P(All, LayerGradcheck, ::testing::ValuesIn(gradcheck_layer_names()),
                         [](const auto& info) {
                           std::string n = info.param;
                           for (auto& ch : n)
                             if (ch == '-') ch = '_';
                           return n;
                         });

}  // namespace
}  // namespace stnet
