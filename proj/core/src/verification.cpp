#include "stnet/verification.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "stnet/analysis.hpp"
#include "stnet/errors.hpp"
#include "stnet/models.hpp"
#include "stnet/training.hpp"

namespace stnet {

std::string OracleReport::json() const {
  nlohmann::json j;
  j["case_id"] = case_id;
  j["max_abs_diff"] = max_abs_diff;
  j["max_rel_err"] = max_rel_err;
  j["tolerance"] = tolerance;
  j["passed"] = passed;
  j["seed"] = seed;
  if (!detail.empty()) j["detail"] = detail;
  return j.dump();
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv_oracle(const ConvSpec& spec, const Tensor<T>& weight, const Tensor<T>* bias, const Tensor<T>& x) {
  const auto N = x.dim(0), Ci = x.dim(1), L = x.dim(2), H = x.dim(3), W = x.dim(4);
  const auto Co = weight.dim(0), KL = weight.dim(2), KH = weight.dim(3), KW = weight.dim(4);
  if (weight.dim(1) != Ci) throw ShapeError("conv_oracle: channel mismatch");
  const auto& s = spec.stride;
  const auto& p = spec.padding;
  const std::size_t OL = (L + 2 * p.l - KL) / s.l + 1;
  const std::size_t OH = (H + 2 * p.h - KH) / s.h + 1;
  const std::size_t OW = (W + 2 * p.w - KW) / s.w + 1;
  Tensor<T> out({N, Co, OL, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t co = 0; co < Co; ++co)
      for (std::size_t ol = 0; ol < OL; ++ol)
        for (std::size_t oh = 0; oh < OH; ++oh)
          for (std::size_t ow = 0; ow < OW; ++ow) {
            T acc = bias ? (*bias)[co] : T{0};
            for (std::size_t ci = 0; ci < Ci; ++ci)
              for (std::size_t dl = 0; dl < KL; ++dl)
                for (std::size_t dh = 0; dh < KH; ++dh)
                  for (std::size_t dw = 0; dw < KW; ++dw) {
                    // Padded coordinates; out-of-range taps read zero.
                    const auto il = static_cast<std::ptrdiff_t>(ol * s.l + dl) - static_cast<std::ptrdiff_t>(p.l);
                    const auto ih = static_cast<std::ptrdiff_t>(oh * s.h + dh) - static_cast<std::ptrdiff_t>(p.h);
                    const auto iw = static_cast<std::ptrdiff_t>(ow * s.w + dw) - static_cast<std::ptrdiff_t>(p.w);
                    if (il < 0 || ih < 0 || iw < 0 || il >= static_cast<std::ptrdiff_t>(L) ||
                        ih >= static_cast<std::ptrdiff_t>(H) || iw >= static_cast<std::ptrdiff_t>(W))
                      continue;
                    acc += x.at({n, ci, static_cast<std::size_t>(il), static_cast<std::size_t>(ih),
                                 static_cast<std::size_t>(iw)}) *
                           weight.at({co, ci, dl, dh, dw});
                  }
            out.at({n, co, ol, oh, ow}) = acc;
          }
  return out;
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> scan_windows(std::size_t extent, std::size_t k, std::size_t s) {
  std::vector<std::pair<std::size_t, std::size_t>> w;
  for (std::size_t start = 0;; start += s) {
    w.emplace_back(start, std::min(extent, start + k));
    if (start + k >= extent) break;
  }
  return w;
}

}  // namespace

template <typename T>
Tensor<T> pool_oracle(const PoolSpec& spec, const Tensor<T>& x) {
  const auto N = x.dim(0), C = x.dim(1);
  const auto wl = scan_windows(x.dim(2), spec.kernel.l, spec.stride.l);
  const auto wh = scan_windows(x.dim(3), spec.kernel.h, spec.stride.h);
  const auto ww = scan_windows(x.dim(4), spec.kernel.w, spec.stride.w);
  Tensor<T> out({N, C, wl.size(), wh.size(), ww.size()});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t a = 0; a < wl.size(); ++a)
        for (std::size_t b = 0; b < wh.size(); ++b)
          for (std::size_t d = 0; d < ww.size(); ++d) {
            T best = -std::numeric_limits<T>::infinity();
            for (auto l = wl[a].first; l < wl[a].second; ++l)
              for (auto h = wh[b].first; h < wh[b].second; ++h)
                for (auto w = ww[d].first; w < ww[d].second; ++w) best = std::max(best, x.at({n, c, l, h, w}));
            out.at({n, c, a, b, d}) = best;
          }
  return out;
}

namespace {

template <typename T>
Tensor<T> relu_oracle(Tensor<T> x) {
  for (auto& v : x.data()) v = v > T{0} ? v : T{0};
  return x;
}

ConvSpec oracle_conv(Extent3 kernel, std::size_t cin, std::size_t cout, const BlockSpec& b, Extent3 stride) {
  ConvSpec c;
  c.cin = cin;
  c.cout = cout;
  c.kernel = kernel;
  c.stride = stride;
  c.padding = {kernel.l == 3 ? b.padding.l : 0, kernel.h == 3 ? b.padding.h : 0, kernel.w == 3 ? b.padding.w : 0};
  return c;
}

}  // namespace

template <typename T>
Tensor<T> block_oracle(Block<T>& block, const Tensor<T>& x) {
  const BlockSpec& b = block.spec();
  const auto convs = block.convs();
  const auto ci = b.cin, co = b.cout;
  const Extent3 s = b.stride;
  auto apply = [&](std::size_t i, const ConvSpec& spec, const Tensor<T>& in) {
    return conv_oracle(spec, convs.at(i)->weight(), &convs.at(i)->bias(), in);
  };
  Tensor<T> fused;
  switch (b.kind) {
    case BlockKind::Fully3D:
      fused = apply(0, oracle_conv({3, 3, 3}, ci, co, b, s), x);
      break;
    case BlockKind::Block1:
      fused = apply(0, oracle_conv({1, 3, 3}, ci, co, b, s), x) + apply(1, oracle_conv({3, 3, 1}, ci, co, b, s), x) +
              apply(2, oracle_conv({3, 1, 3}, ci, co, b, s), x);
      break;
    case BlockKind::Block2:
    case BlockKind::Block2Plus: {
      Tensor<T> h = apply(0, oracle_conv({1, 3, 3}, ci, co, b, {1, s.h, s.w}), x);
      if (b.kind == BlockKind::Block2Plus) h = relu_oracle(h);
      fused = apply(1, oracle_conv({3, 1, 1}, co, co, b, {s.l, 1, 1}), h);
      break;
    }
    case BlockKind::Block3:
      fused = relu_oracle(apply(0, oracle_conv({3, 1, 1}, ci, co, b, s), x)) +
              relu_oracle(apply(1, oracle_conv({1, 3, 1}, ci, co, b, s), x)) +
              relu_oracle(apply(2, oracle_conv({1, 1, 3}, ci, co, b, s), x));
      break;
  }
  return pool_oracle(b.pool, relu_oracle(fused));
}

template <typename T>
Tensor<T> lstm_oracle(Lstm<T>& lstm, const Tensor<T>& x) {
  const auto N = x.dim(0), S = x.dim(1), D = x.dim(2), H = lstm.hidden_size();
  const Tensor<T>& wi = lstm.w_ih();
  const Tensor<T>& wh = lstm.w_hh();
  const Tensor<T>& bias = lstm.bias();
  auto sigmoid = [](T v) { return T{1} / (T{1} + std::exp(-v)); };
  Tensor<T> out({N, S, H});
  for (std::size_t n = 0; n < N; ++n) {
    std::vector<T> h(H, T{0}), c(H, T{0});
    for (std::size_t t = 0; t < S; ++t) {
      std::vector<T> hn(H), cn(H);
      for (std::size_t j = 0; j < H; ++j) {
        T z[4];
        for (std::size_t g = 0; g < 4; ++g) {
          const std::size_t row = g * H + j;
          T acc = bias[row];
          for (std::size_t d = 0; d < D; ++d) acc += wi.at({row, d}) * x.at({n, t, d});
          for (std::size_t k = 0; k < H; ++k) acc += wh.at({row, k}) * h[k];
          z[g] = acc;
        }
        const T i = sigmoid(z[0]), f = sigmoid(z[1]), g = std::tanh(z[2]), o = sigmoid(z[3]);
        cn[j] = f * c[j] + i * g;
        hn[j] = o * std::tanh(cn[j]);
      }
      h = hn;
      c = cn;
      for (std::size_t j = 0; j < H; ++j) out.at({n, t, j}) = h[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

OracleReport compare(std::string case_id, std::uint64_t seed, const Tensor<double>& got, const Tensor<double>& want,
                     double tol) {
  OracleReport r;
  r.case_id = std::move(case_id);
  r.seed = seed;
  r.tolerance = tol;
  if (got.shape() != want.shape()) {
    r.max_abs_diff = r.max_rel_err = std::numeric_limits<double>::infinity();
    r.detail = "shape " + shape_str(got.shape()) + " vs oracle " + shape_str(want.shape());
    return r;
  }
  for (std::size_t i = 0; i < got.size(); ++i) {
    r.max_abs_diff = std::max(r.max_abs_diff, std::abs(got[i] - want[i]));
    r.max_rel_err = std::max(r.max_rel_err, rel_err(got[i], want[i]));
  }
  r.passed = r.max_abs_diff <= tol;
  return r;
}

std::size_t draw(Rng& rng, std::size_t lo, std::size_t hi) { return lo + static_cast<std::size_t>(rng.below(hi - lo + 1)); }

Tensor<double> normal_tensor(Rng& rng, Shape shape) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace

OracleReport conv_oracle_case(std::uint64_t seed, const Extent3& kernel) {
  Rng rng(seed);
  ConvSpec spec;
  spec.cin = draw(rng, 1, 3);
  spec.cout = draw(rng, 1, 3);
  spec.kernel = kernel;
  spec.stride = {draw(rng, 1, 2), draw(rng, 1, 2), draw(rng, 1, 2)};
  auto pad = [&](std::size_t k) { return k > 1 ? draw(rng, 0, k / 2) : std::size_t{0}; };
  spec.padding = {pad(kernel.l), pad(kernel.h), pad(kernel.w)};
  auto extent = [&](std::size_t k, std::size_t p) { return draw(rng, std::max<std::size_t>(1, k > 2 * p ? k - 2 * p : 1), 6); };
  const Shape xs{draw(rng, 1, 2), spec.cin, extent(kernel.l, spec.padding.l), extent(kernel.h, spec.padding.h),
                 extent(kernel.w, spec.padding.w)};
  const auto x = normal_tensor(rng, xs);
  const auto w = normal_tensor(rng, spec.weight_shape());
  const auto b = normal_tensor(rng, {spec.cout});
  return compare("conv/" + extent_str(kernel), seed, conv3d_forward(spec, w, &b, x), conv_oracle(spec, w, &b, x),
                 kOracleTol64);
}

OracleReport pool_oracle_case(std::uint64_t seed) {
  Rng rng(seed);
  PoolSpec spec;
  spec.kernel = {draw(rng, 1, 3), draw(rng, 1, 3), draw(rng, 1, 3)};
  spec.stride = {draw(rng, 1, spec.kernel.l), draw(rng, 1, spec.kernel.h), draw(rng, 1, spec.kernel.w)};
  const auto x = normal_tensor(rng, {draw(rng, 1, 2), draw(rng, 1, 3), draw(rng, 1, 6), draw(rng, 1, 6), draw(rng, 1, 6)});
  return compare("maxpool", seed, maxpool3d_forward(spec, x).output, pool_oracle(spec, x), kOracleTol64);
}

OracleReport block_oracle_case(BlockKind kind, std::uint64_t seed) {
  Rng rng(seed);
  BlockSpec spec;
  spec.kind = kind;
  spec.cin = draw(rng, 1, 3);
  spec.cout = draw(rng, 1, 3);
  spec.stride = {draw(rng, 1, 2), draw(rng, 1, 2), draw(rng, 1, 2)};
  Block<double> block(spec, rng);
  for (auto* c : block.convs())
    for (auto& v : c->bias().data()) v = rng.uniform(-0.5, 0.5);
  const auto x = normal_tensor(rng, {draw(rng, 1, 2), spec.cin, draw(rng, 2, 6), draw(rng, 2, 6), draw(rng, 2, 6)});
  return compare("block/" + std::string(block_kind_name(kind)), seed, block.forward(x, Mode::Eval),
                 block_oracle(block, x), kOracleTol64);
}

OracleReport lstm_oracle_case(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t D = draw(rng, 1, 3), H = draw(rng, 1, 3);
  Lstm<double> lstm(D, H, rng);
  for (auto& v : lstm.bias().data()) v = rng.uniform(-0.5, 0.5);
  const auto x = normal_tensor(rng, {draw(rng, 1, 2), draw(rng, 1, 5), D});
  return compare("lstm", seed, lstm.forward(x, Mode::Eval).outputs, lstm_oracle(lstm, x), kOracleTol64);
}

// ---------------------------------------------------------------------------

std::vector<double> finite_diff(const std::function<double(std::span<const double>)>& fn, std::vector<double> params,
                                double eps) {
  if (!(eps > 0.0)) throw RangeError("finite difference step must be positive");
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double v = params[i];
    params[i] = v + eps;
    const double up = fn(params);
    params[i] = v - eps;
    const double down = fn(params);
    params[i] = v;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

GradTarget parse_grad_target(std::string_view name) {
  if (name == "layer") return GradTarget::Layer;
  if (name == "block") return GradTarget::Block;
  if (name == "model") return GradTarget::Model;
  throw UsageError("unknown gradcheck target '" + std::string(name) + "' (expected layer, block or model)");
}

std::string_view grad_target_name(GradTarget target) {
  switch (target) {
    case GradTarget::Layer: return "layer";
    case GradTarget::Block: return "block";
    case GradTarget::Model: return "model";
  }
  return "?";
}

const std::vector<std::string>& gradcheck_layer_names() {
  static const std::vector<std::string> names{"conv3d",    "conv3d-hw", "conv3d-lh", "conv3d-lw", "conv3d-l",
                                              "conv3d-h",  "conv3d-w",  "maxpool3d", "relu",      "batchnorm",
                                              "batchnorm-seq", "dropout", "linear", "lstm", "cross-entropy"};
  return names;
}

const std::vector<std::string>& gradcheck_model_names() { return arch_names(); }

namespace {

// A differentiable setup: loss() runs a forward pass and returns the scalar
// objective; analytic() fills every slot's grad.
struct Probe {
  Slots<double> slots;
  std::function<double()> loss;
  std::function<void()> analytic;
  std::function<double()> margin = [] { return std::numeric_limits<double>::infinity(); };
  std::vector<std::shared_ptr<void>> keep;
};

template <typename X>
std::shared_ptr<X> hold(Probe& p, std::shared_ptr<X> x) {
  p.keep.push_back(x);
  return x;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) throw ShapeError("gradcheck: projection shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Input slot plus a fixed random projection r so that loss = <r, f(x)>.
struct Io {
  Tensor<double> x, gx, r;
};

Extent3 kernel_for(std::string_view name) {
  if (name == "conv3d") return kernels::full;
  if (name == "conv3d-hw") return kernels::plane_hw;
  if (name == "conv3d-lh") return kernels::plane_lh;
  if (name == "conv3d-lw") return kernels::plane_lw;
  if (name == "conv3d-l") return kernels::axis_l;
  if (name == "conv3d-h") return kernels::axis_h;
  return kernels::axis_w;
}

// Wires a layer with forward(x, mode) / backward(g) into a probe.
template <typename L>
Probe layer_probe(std::shared_ptr<L> layer, std::shared_ptr<Io> io, Shape out_shape) {
  Probe p;
  p.keep = {layer, io};
  p.slots.push_back({"input", &io->x, &io->gx});
  if (out_shape.empty()) out_shape = layer->forward(io->x, Mode::Train).shape();
  Rng r(0x5eed);
  io->r = normal_tensor(r, out_shape);
  p.loss = [layer, io] { return dot(io->r, layer->forward(io->x, Mode::Train)); };
  p.analytic = [layer, io] {
    layer->forward(io->x, Mode::Train);
    io->gx = layer->backward(io->r);
  };
  return p;
}

Probe make_layer_probe(std::string_view name, Rng& rng) {
  auto io = std::make_shared<Io>();
  if (name.starts_with("conv3d")) {
    ConvSpec spec;
    spec.cin = 2;
    spec.cout = 3;
    spec.kernel = kernel_for(name);
    spec.padding = {spec.kernel.l / 2, spec.kernel.h / 2, spec.kernel.w / 2};
    spec.stride = {draw(rng, 1, 2), draw(rng, 1, 2), draw(rng, 1, 2)};
    auto conv = std::make_shared<Conv3d<double>>(spec, rng);
    for (auto& v : conv->bias().data()) v = rng.uniform(-0.5, 0.5);
    io->x = normal_tensor(rng, {2, 2, 4, 5, 4});
    Probe p = layer_probe(conv, io, {});
    p.slots.push_back({"weight", &conv->weight(), const_cast<Tensor<double>*>(&conv->weight_grad())});
    p.slots.push_back({"bias", &conv->bias(), const_cast<Tensor<double>*>(&conv->bias_grad())});
    p.analytic = [conv, io] {
      Slots<double> s;
      conv->collect("", s);
      for (auto& slot : s) slot.grad->fill(0.0);
      conv->forward(io->x, Mode::Train);
      io->gx = conv->backward(io->r);
    };
    return p;
  }
  if (name == "maxpool3d") {
    auto pool = std::make_shared<MaxPool3d<double>>();
    io->x = normal_tensor(rng, {2, 2, 3, 5, 4});
    Probe p = layer_probe(pool, io, {});
    p.margin = [pool] { return pool->tie_margin(); };
    return p;
  }
  if (name == "relu") {
    auto relu = std::make_shared<ReLU<double>>();
    io->x = normal_tensor(rng, {3, 7});
    Probe p = layer_probe(relu, io, {});
    p.margin = [relu] { return relu->kink_margin(); };
    return p;
  }
  if (name == "batchnorm" || name == "batchnorm-seq") {
    const bool seq = name == "batchnorm-seq";
    auto bn = std::make_shared<BatchNorm<double>>(3, seq ? 2 : 1);
    for (auto& v : bn->gamma().data()) v = rng.uniform(0.5, 1.5);
    for (auto& v : bn->beta().data()) v = rng.uniform(-0.5, 0.5);
    io->x = normal_tensor(rng, seq ? Shape{2, 4, 3} : Shape{2, 3, 2, 2, 2});
    Probe p = layer_probe(bn, io, io->x.shape());
    Slots<double> s;
    bn->collect("", s);
    for (auto& slot : s)
      if (slot.grad) p.slots.push_back(slot);
    p.analytic = [bn, io] {
      Slots<double> s2;
      bn->collect("", s2);
      for (auto& slot : s2)
        if (slot.grad) slot.grad->fill(0.0);
      bn->forward(io->x, Mode::Train);
      io->gx = bn->backward(io->r);
    };
    return p;
  }
  if (name == "dropout") {
    auto drop = std::make_shared<Dropout<double>>(0.5, rng.next_u64());
    io->x = normal_tensor(rng, {4, 6});
    Probe p = layer_probe(drop, io, io->x.shape());
    p.analytic = [drop, io] {
      drop->freeze_mask(false);
      drop->forward(io->x, Mode::Train);
      drop->freeze_mask(true);
      io->gx = drop->backward(io->r);
    };
    return p;
  }
  if (name == "linear") {
    auto lin = std::make_shared<Linear<double>>(4, 5, rng);
    for (auto& v : lin->bias().data()) v = rng.uniform(-0.5, 0.5);
    io->x = normal_tensor(rng, {3, 4});
    Probe p = layer_probe(lin, io, {});
    lin->collect("", p.slots);
    p.analytic = [lin, io] {
      Slots<double> s;
      lin->collect("", s);
      for (auto& slot : s) slot.grad->fill(0.0);
      lin->forward(io->x, Mode::Train);
      io->gx = lin->backward(io->r);
    };
    return p;
  }
  if (name == "lstm") {
    auto lstm = std::make_shared<Lstm<double>>(3, 4, rng);
    for (auto& v : lstm->bias().data()) v = rng.uniform(-0.5, 0.5);
    io->x = normal_tensor(rng, {2, 5, 3});
    Probe p;
    p.keep = {lstm, io};
    p.slots.push_back({"input", &io->x, &io->gx});
    lstm->collect("", p.slots);
    io->r = normal_tensor(rng, {2, 5, 4});
    p.loss = [lstm, io] { return dot(io->r, lstm->forward(io->x, Mode::Train).outputs); };
    p.analytic = [lstm, io] {
      Slots<double> s;
      lstm->collect("", s);
      for (auto& slot : s) slot.grad->fill(0.0);
      lstm->forward(io->x, Mode::Train);
      io->gx = lstm->backward(io->r);
    };
    return p;
  }
  if (name == "cross-entropy") {
    auto labels = std::make_shared<std::vector<int>>();
    io->x = normal_tensor(rng, {4, 2});
    for (int i = 0; i < 4; ++i) labels->push_back(static_cast<int>(rng.below(2)));
    Probe p;
    p.keep = {labels, io};
    p.slots.push_back({"logits", &io->x, &io->gx});
    p.loss = [labels, io] { return cross_entropy<double>(io->x, *labels).loss; };
    p.analytic = [labels, io] { io->gx = cross_entropy<double>(io->x, *labels).grad; };
    return p;
  }
  throw UsageError("unknown layer '" + std::string(name) + "'");
}

Probe make_block_probe(std::string_view name, Rng& rng) {
  BlockSpec spec;
  spec.kind = parse_block_kind(name);
  spec.cin = 2;
  spec.cout = 3;
  auto block = std::make_shared<Block<double>>(spec, rng);
  for (auto* c : block->convs())
    for (auto& v : c->bias().data()) v = rng.uniform(-0.2, 0.2);
  auto io = std::make_shared<Io>();
  io->x = normal_tensor(rng, {2, 2, 4, 6, 5});
  Probe p = layer_probe(block, io, {});
  block->collect("block", p.slots);
  p.analytic = [block, io] {
    Slots<double> s;
    block->collect("", s);
    for (auto& slot : s) slot.grad->fill(0.0);
    block->forward(io->x, Mode::Train);
    io->gx = block->backward(io->r);
  };
  p.margin = [block] { return block->kink_margin(); };
  return p;
}

Probe make_model_probe(std::string_view name, Rng& rng) {
  ArchOptions opt;
  opt.channels = {3, 4, 4, 6, 6};
  opt.audio_features = 3;
  opt.feature_dim = 5;
  opt.lstm_hidden = 4;
  std::shared_ptr<Model<double>> model = build_arch<double>(name, rng, opt);
  auto io = std::make_shared<Io>();
  switch (model->input_kind()) {
    case InputKind::Video: io->x = normal_tensor(rng, {2, 3, 4, 8, 8}); break;
    case InputKind::PooledFeatures: io->x = normal_tensor(rng, {4, 2 * opt.audio_features}); break;
    case InputKind::Sequence:
      io->x = normal_tensor(rng, {2, name == "feat-lstm" ? std::size_t{6} : kSegmentCount,
                                  name == "feat-lstm" ? opt.feature_dim : opt.audio_features});
      break;
  }
  auto labels = std::make_shared<std::vector<int>>();
  for (std::size_t i = 0; i < io->x.dim(0); ++i) labels->push_back(static_cast<int>(i % 2));
  Probe p;
  p.keep = {model, io, labels};
  model->collect(p.slots);
  std::erase_if(p.slots, [](const TensorSlot<double>& s) { return s.grad == nullptr; });
  // Zero biases put dead units exactly on a ReLU kink.
  for (auto& s : p.slots)
    if (s.name.ends_with(".bias"))
      for (auto& v : s.value->data()) v = rng.uniform(-0.2, 0.2);
  p.loss = [model, io, labels] { return cross_entropy<double>(model->forward(io->x, Mode::Train), *labels).loss; };
  p.analytic = [model, io, labels] {
    model->freeze_dropout(false);
    model->zero_grad();
    const auto logits = model->forward(io->x, Mode::Train);
    model->freeze_dropout(true);
    model->backward(cross_entropy<double>(logits, *labels).grad);
  };
  p.margin = [model] { return model->kink_margin(); };
  return p;
}

Probe make_probe(GradTarget target, std::string_view name, Rng& rng) {
  switch (target) {
    case GradTarget::Layer: return make_layer_probe(name, rng);
    case GradTarget::Block: return make_block_probe(name, rng);
    case GradTarget::Model: return make_model_probe(name, rng);
  }
  throw std::logic_error("unhandled gradcheck target");
}

std::vector<std::size_t> pick_coords(std::size_t size, std::size_t max_coords, Rng& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  if (size <= max_coords) return idx;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < max_coords; ++i) std::swap(idx[i], idx[i + rng.below(size - i)]);
  idx.resize(max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

OracleReport gradcheck(GradTarget target, std::string_view name, std::uint64_t seed, const GradcheckOptions& options) {
  if (target == GradTarget::Model && !std::ranges::count(gradcheck_model_names(), name))
    throw UsageError("unknown model '" + std::string(name) + "'");
  if (target == GradTarget::Layer && !std::ranges::count(gradcheck_layer_names(), name))
    throw UsageError("unknown layer '" + std::string(name) + "'");
  OracleReport report;
  report.case_id = "gradcheck/" + std::string(grad_target_name(target)) + "/" + std::string(name);
  report.tolerance = options.tol;

  const Rng base(seed);
  std::optional<Probe> probe;
  std::size_t resamples = 0;
  for (std::size_t attempt = 0; attempt < options.max_resamples; ++attempt) {
    Rng rng = attempt == 0 ? Rng(seed) : base.fork(attempt);
    Probe p = make_probe(target, name, rng);
    p.analytic();
    if (p.margin() >= kKinkMargin) {
      probe = std::move(p);
      resamples = attempt;
      break;
    }
  }
  report.seed = seed;
  if (!probe) {
    report.max_rel_err = report.max_abs_diff = std::numeric_limits<double>::infinity();
    report.detail = "no draw cleared the kink margin";
    return report;
  }
  if (resamples) report.detail = "resampled " + std::to_string(resamples) + "x; ";

  Rng coord_rng = base.fork(0xc0);
  std::string worst;
  std::size_t floored = 0;
  for (const auto& slot : probe->slots) {
    const auto coords = pick_coords(slot.value->size(), options.max_coords, coord_rng);
    std::vector<double> params(coords.size());
    for (std::size_t i = 0; i < coords.size(); ++i) params[i] = (*slot.value)[coords[i]];
    const std::vector<double> original = params;
    auto fn = [&](std::span<const double> v) {
      for (std::size_t i = 0; i < coords.size(); ++i) (*slot.value)[coords[i]] = v[i];
      return probe->loss();
    };
    const auto numeric = finite_diff(fn, params, options.eps);
    fn(original);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const double a = (*slot.grad)[coords[i]], n = numeric[i];
      if (!std::isfinite(a) || !std::isfinite(n)) {
        report.max_rel_err = report.max_abs_diff = std::numeric_limits<double>::infinity();
        report.detail += "non-finite gradient in " + slot.name;
        return report;
      }
      const double e = rel_err(a, n);
      report.max_abs_diff = std::max(report.max_abs_diff, std::abs(a - n));
      if (e > options.tol && std::abs(a - n) <= options.abs_floor) {
        ++floored;
        continue;
      }
      if (e > report.max_rel_err) {
        report.max_rel_err = e;
        char buf[96];
        std::snprintf(buf, sizeof buf, "[%zu] (analytic %.6g, numeric %.6g)", coords[i], a, n);
        worst = slot.name + buf;
      }
    }
  }
  report.passed = report.max_rel_err <= options.tol;
  if (floored) report.detail += std::to_string(floored) + " coords within the noise floor; ";
  report.detail += "worst " + (worst.empty() ? std::string("none") : worst);
  return report;
}

// ---------------------------------------------------------------------------

const std::vector<Table2Row>& table2_rows() {
  static const std::vector<Table2Row> rows{
      {"fully3d", 7.8e5, 0.0},       {"two-block1", 7.8e5, 0.0},      {"two-block2", 4.37e5, 1.8},
      {"two-block2plus", 4.37e5, 1.8}, {"three-block2", 3.75e5, 2.1}, {"three-block2plus", 3.75e5, 2.1},
      {"two-block3", 3.4e5, 2.3}};
  return rows;
}

std::vector<OracleReport> table2_audit() {
  std::vector<OracleReport> out;
  const ParamReport baseline = count_params(video_arch("fully3d"));
  for (const auto& row : table2_rows()) {
    OracleReport r;
    r.case_id = "table2/" + row.arch;
    r.tolerance = 0.01;
    const NetworkArch arch = video_arch(row.arch);
    const ParamReport rep = count_params(arch);
    Rng rng(0);
    const VideoNet<float> net(arch, rng);
    const auto allocated = net.conv_weight_count();
    const double total = static_cast<double>(rep.total_weights);
    r.max_abs_diff = std::abs(total - row.published_total);
    r.max_rel_err = std::abs(1.0 - total / row.published_total);
    const double factor = round1(decrease_factor(rep, baseline));
    const double want_factor = row.published_factor == 0.0 ? 1.0 : row.published_factor;
    std::vector<std::string> problems;
    if (allocated != rep.total_weights)
      problems.push_back("closed form " + std::to_string(rep.total_weights) + " != allocated " +
                         std::to_string(allocated));
    if (r.max_rel_err > r.tolerance) problems.push_back("total outside 1% of the printed value");
    if (factor != want_factor) problems.push_back("decrease factor rounds to " + std::to_string(factor));
    if (row.arch == "two-block1" && rep.total_weights != baseline.total_weights)
      problems.push_back("block1 total differs from fully3d");
    r.passed = problems.empty();
    r.detail = "total " + std::to_string(rep.total_weights) + ", factor " + std::to_string(factor);
    for (const auto& p : problems) r.detail += "; " + p;
    out.push_back(std::move(r));
  }
  return out;
}

#define STNET_INSTANTIATE(T)                                                                         \
  template Tensor<T> conv_oracle(const ConvSpec&, const Tensor<T>&, const Tensor<T>*, const Tensor<T>&); \
  template Tensor<T> pool_oracle(const PoolSpec&, const Tensor<T>&);                                \
  template Tensor<T> block_oracle(Block<T>&, const Tensor<T>&);                                     \
  template Tensor<T> lstm_oracle(Lstm<T>&, const Tensor<T>&);

STNET_INSTANTIATE(float)
STNET_INSTANTIATE(double)

#undef STNET_INSTANTIATE

}  // namespace stnet
