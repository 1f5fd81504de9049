#include "stnet/layers.hpp"

#include <algorithm>
#include <cmath>

#include "stnet/errors.hpp"
#include "stnet/parallel.hpp"

namespace stnet {

std::string extent_str(const Extent3& e) {
  return "(" + std::to_string(e.l) + "," + std::to_string(e.h) + "," + std::to_string(e.w) + ")";
}

void ConvSpec::validate() const {
  if (cin == 0 || cout == 0) throw ShapeError("conv: channel counts must be >= 1");
  if (kernel.l == 0 || kernel.h == 0 || kernel.w == 0) throw ShapeError("conv: kernel extents must be >= 1");
  if (stride.l == 0 || stride.h == 0 || stride.w == 0) throw ShapeError("conv: stride extents must be >= 1");
}

namespace {

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t s, std::size_t p, const char* axis) {
  const std::size_t padded = in + 2 * p;
  if (padded < k)
    throw ShapeError(std::string("conv: padded extent smaller than kernel on axis ") + axis);
  return (padded - k) / s + 1;
}

std::size_t pool_out(std::size_t in, std::size_t k, std::size_t s) {
  if (in <= k) return 1;
  std::size_t out = (in - k + s - 1) / s + 1;
  if ((out - 1) * s >= in) --out;
  return out;
}

// Dot product with eight fixed lanes; the combination order is fixed so the
// result is reproducible regardless of vector width.
template <typename T>
T dot8(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  for (std::size_t j = 0; i < n; ++i, ++j) acc[j] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

struct ConvGeometry {
  std::size_t n, cin, cout;
  Extent3 in, out;
  std::size_t in_vol, out_vol, k_rows;
};

ConvGeometry geometry(const ConvSpec& spec, const Shape& x) {
  spec.validate();
  if (x.size() != 5) throw ShapeError("conv: input must be [N,C,L,H,W], got " + shape_str(x));
  if (x[1] != spec.cin)
    throw ShapeError("conv: input has " + std::to_string(x[1]) + " channels, expected " +
                     std::to_string(spec.cin));
  ConvGeometry g{};
  g.n = x[0];
  g.cin = spec.cin;
  g.cout = spec.cout;
  g.in = {x[2], x[3], x[4]};
  g.out = spec.output_extent(g.in);
  g.in_vol = g.in.volume();
  g.out_vol = g.out.volume();
  g.k_rows = spec.cin * spec.kernel.volume();
  return g;
}

// cols[r][p], r = ((ci*kl + dl)*kh + dh)*kw + dw, p = output position.
template <typename T>
void im2col(const ConvSpec& spec, const ConvGeometry& g, const T* x, std::vector<T>& cols) {
  cols.assign(g.k_rows * g.out_vol, T{0});
  const auto& k = spec.kernel;
  const auto& s = spec.stride;
  const auto& p = spec.padding;
  std::size_t r = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t dl = 0; dl < k.l; ++dl)
      for (std::size_t dh = 0; dh < k.h; ++dh)
        for (std::size_t dw = 0; dw < k.w; ++dw, ++r) {
          T* row = cols.data() + r * g.out_vol;
          const T* xc = x + ci * g.in_vol;
          for (std::size_t ol = 0; ol < g.out.l; ++ol) {
            const auto il = static_cast<std::ptrdiff_t>(ol * s.l + dl) - static_cast<std::ptrdiff_t>(p.l);
            if (il < 0 || il >= static_cast<std::ptrdiff_t>(g.in.l)) continue;
            for (std::size_t oh = 0; oh < g.out.h; ++oh) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * s.h + dh) - static_cast<std::ptrdiff_t>(p.h);
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in.h)) continue;
              const T* xrow = xc + (static_cast<std::size_t>(il) * g.in.h + static_cast<std::size_t>(ih)) * g.in.w;
              T* dst = row + (ol * g.out.h + oh) * g.out.w;
              for (std::size_t ow = 0; ow < g.out.w; ++ow) {
                const auto iw = static_cast<std::ptrdiff_t>(ow * s.w + dw) - static_cast<std::ptrdiff_t>(p.w);
                if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in.w)) dst[ow] = xrow[iw];
              }
            }
          }
        }
}

template <typename T>
void col2im_add(const ConvSpec& spec, const ConvGeometry& g, const std::vector<T>& cols, T* gx) {
  const auto& k = spec.kernel;
  const auto& s = spec.stride;
  const auto& p = spec.padding;
  std::size_t r = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t dl = 0; dl < k.l; ++dl)
      for (std::size_t dh = 0; dh < k.h; ++dh)
        for (std::size_t dw = 0; dw < k.w; ++dw, ++r) {
          const T* row = cols.data() + r * g.out_vol;
          T* gc = gx + ci * g.in_vol;
          for (std::size_t ol = 0; ol < g.out.l; ++ol) {
            const auto il = static_cast<std::ptrdiff_t>(ol * s.l + dl) - static_cast<std::ptrdiff_t>(p.l);
            if (il < 0 || il >= static_cast<std::ptrdiff_t>(g.in.l)) continue;
            for (std::size_t oh = 0; oh < g.out.h; ++oh) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * s.h + dh) - static_cast<std::ptrdiff_t>(p.h);
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in.h)) continue;
              T* grow = gc + (static_cast<std::size_t>(il) * g.in.h + static_cast<std::size_t>(ih)) * g.in.w;
              const T* src = row + (ol * g.out.h + oh) * g.out.w;
              for (std::size_t ow = 0; ow < g.out.w; ++ow) {
                const auto iw = static_cast<std::ptrdiff_t>(ow * s.w + dw) - static_cast<std::ptrdiff_t>(p.w);
                if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in.w)) grow[iw] += src[ow];
              }
            }
          }
        }
}

constexpr std::size_t kTile = 512;

}  // namespace

Extent3 ConvSpec::output_extent(const Extent3& in) const {
  validate();
  return {conv_out(in.l, kernel.l, stride.l, padding.l, "L"), conv_out(in.h, kernel.h, stride.h, padding.h, "H"),
          conv_out(in.w, kernel.w, stride.w, padding.w, "W")};
}

Extent3 PoolSpec::output_extent(const Extent3& in) const {
  if (kernel.volume() == 0 || stride.l == 0 || stride.h == 0 || stride.w == 0)
    throw ShapeError("pool: kernel and stride extents must be >= 1");
  return {pool_out(in.l, kernel.l, stride.l), pool_out(in.h, kernel.h, stride.h),
          pool_out(in.w, kernel.w, stride.w)};
}

Extent3 spatial_extent(const Shape& x) {
  if (x.size() != 5) throw ShapeError("expected [N,C,L,H,W], got " + shape_str(x));
  return {x[2], x[3], x[4]};
}

template <typename T>
Tensor<T> he_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
  const double b = std::sqrt(6.0 / static_cast<double>(fan_in));
  return Tensor<T>::uniform(rng, std::move(shape), static_cast<T>(-b), static_cast<T>(b));
}

template <typename T>
Tensor<T> conv3d_forward(const ConvSpec& spec, const Tensor<T>& weight, const Tensor<T>* bias,
                         const Tensor<T>& x) {
  const auto g = geometry(spec, x.shape());
  if (weight.shape() != spec.weight_shape())
    throw ShapeError("conv: weight shape " + shape_str(weight.shape()) + ", expected " +
                     shape_str(spec.weight_shape()));
  if (bias && bias->shape() != Shape{spec.cout}) throw ShapeError("conv: bias shape mismatch");

  Tensor<T> y({g.n, g.cout, g.out.l, g.out.h, g.out.w});
  std::vector<T> cols;
  const T* w = weight.ptr();
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(spec, g, x.ptr() + n * g.cin * g.in_vol, cols);
    T* yn = y.ptr() + n * g.cout * g.out_vol;
    parallel_for(g.cout, [&](std::size_t co_begin, std::size_t co_end) {
      for (std::size_t p0 = 0; p0 < g.out_vol; p0 += kTile) {
        const std::size_t len = std::min(kTile, g.out_vol - p0);
        for (std::size_t co = co_begin; co < co_end; ++co) {
          T* out = yn + co * g.out_vol + p0;
          const T* wrow = w + co * g.k_rows;
          for (std::size_t r = 0; r < g.k_rows; ++r) {
            const T wv = wrow[r];
            const T* c = cols.data() + r * g.out_vol + p0;
            for (std::size_t j = 0; j < len; ++j) out[j] += wv * c[j];
          }
        }
      }
    });
    if (bias) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        const T b = (*bias)[co];
        T* out = yn + co * g.out_vol;
        for (std::size_t j = 0; j < g.out_vol; ++j) out[j] += b;
      }
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> conv3d_backward(const ConvSpec& spec, const Tensor<T>& weight, const Tensor<T>& x,
                             const Tensor<T>& grad_out, bool need_input_grad) {
  const auto g = geometry(spec, x.shape());
  const Shape out_shape{g.n, g.cout, g.out.l, g.out.h, g.out.w};
  if (grad_out.shape() != out_shape)
    throw ShapeError("conv backward: grad_out " + shape_str(grad_out.shape()) + ", expected " +
                     shape_str(out_shape));
  if (weight.shape() != spec.weight_shape()) throw ShapeError("conv backward: weight shape mismatch");

  ConvGrads<T> grads{need_input_grad ? Tensor<T>(x.shape()) : Tensor<T>(), Tensor<T>(spec.weight_shape()),
                     Tensor<T>({spec.cout})};
  std::vector<T> cols, gcols;
  const T* w = weight.ptr();
  T* gw = grads.weight.ptr();
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* gy = grad_out.ptr() + n * g.cout * g.out_vol;
    for (std::size_t co = 0; co < g.cout; ++co) {
      T s{0};
      const T* row = gy + co * g.out_vol;
      for (std::size_t j = 0; j < g.out_vol; ++j) s += row[j];
      grads.bias[co] += s;
    }
    im2col(spec, g, x.ptr() + n * g.cin * g.in_vol, cols);
    parallel_for(g.cout, [&](std::size_t co_begin, std::size_t co_end) {
      for (std::size_t co = co_begin; co < co_end; ++co)
        for (std::size_t r = 0; r < g.k_rows; ++r)
          gw[co * g.k_rows + r] += dot8(gy + co * g.out_vol, cols.data() + r * g.out_vol, g.out_vol);
    });
    if (!need_input_grad) continue;
    gcols.assign(g.k_rows * g.out_vol, T{0});
    parallel_for(g.k_rows, [&](std::size_t r_begin, std::size_t r_end) {
      for (std::size_t p0 = 0; p0 < g.out_vol; p0 += kTile) {
        const std::size_t len = std::min(kTile, g.out_vol - p0);
        for (std::size_t r = r_begin; r < r_end; ++r) {
          T* dst = gcols.data() + r * g.out_vol + p0;
          for (std::size_t co = 0; co < g.cout; ++co) {
            const T wv = w[co * g.k_rows + r];
            const T* src = gy + co * g.out_vol + p0;
            for (std::size_t j = 0; j < len; ++j) dst[j] += wv * src[j];
          }
        }
      }
    });
    col2im_add(spec, g, gcols, grads.input.ptr() + n * g.cin * g.in_vol);
  }
  return grads;
}

template <typename T>
Conv3d<T>::Conv3d(const ConvSpec& spec, Rng& rng)
    : spec_(spec),
      weight_(he_uniform<T>(rng, spec.weight_shape(), spec.cin * spec.kernel.volume())),
      bias_({spec.cout}),
      grad_w_(spec.weight_shape()),
      grad_b_({spec.cout}) {
  spec_.validate();
}

template <typename T>
Tensor<T> Conv3d<T>::forward(const Tensor<T>& x, Mode mode) {
  if (mode == Mode::Train) {
    input_ = x;
    has_input_ = true;
  }
  return conv3d_forward(spec_, weight_, spec_.bias ? &bias_ : nullptr, x);
}

template <typename T>
Tensor<T> Conv3d<T>::backward(const Tensor<T>& grad_out, bool need_input_grad) {
  if (!has_input_) throw TrainingError("conv backward called without a training-mode forward");
  auto g = conv3d_backward(spec_, weight_, input_, grad_out, need_input_grad);
  add_inplace(grad_w_, g.weight);
  if (spec_.bias) add_inplace(grad_b_, g.bias);
  return std::move(g.input);
}

template <typename T>
void Conv3d<T>::collect(const std::string& prefix, Slots<T>& out) {
  out.push_back({prefix + ".weight", &weight_, &grad_w_});
  if (spec_.bias) out.push_back({prefix + ".bias", &bias_, &grad_b_});
}

// ---------------------------------------------------------------------------

template <typename T>
PoolResult<T> maxpool3d_forward(const PoolSpec& spec, const Tensor<T>& x) {
  const Extent3 in = spatial_extent(x.shape());
  const Extent3 out = spec.output_extent(in);
  const std::size_t nc = x.dim(0) * x.dim(1);
  PoolResult<T> r{Tensor<T>({x.dim(0), x.dim(1), out.l, out.h, out.w}), {}};
  r.argmax.resize(r.output.size());
  const std::size_t in_vol = in.volume(), out_vol = out.volume();
  for (std::size_t c = 0; c < nc; ++c) {
    const T* xc = x.ptr() + c * in_vol;
    for (std::size_t ol = 0; ol < out.l; ++ol)
      for (std::size_t oh = 0; oh < out.h; ++oh)
        for (std::size_t ow = 0; ow < out.w; ++ow) {
          const std::size_t l0 = ol * spec.stride.l, h0 = oh * spec.stride.h, w0 = ow * spec.stride.w;
          const std::size_t l1 = std::min(in.l, l0 + spec.kernel.l), h1 = std::min(in.h, h0 + spec.kernel.h),
                            w1 = std::min(in.w, w0 + spec.kernel.w);
          std::size_t best = (l0 * in.h + h0) * in.w + w0;
          for (std::size_t l = l0; l < l1; ++l)
            for (std::size_t h = h0; h < h1; ++h)
              for (std::size_t w = w0; w < w1; ++w) {
                const std::size_t idx = (l * in.h + h) * in.w + w;
                if (xc[idx] > xc[best]) best = idx;
              }
          const std::size_t o = c * out_vol + (ol * out.h + oh) * out.w + ow;
          r.output[o] = xc[best];
          r.argmax[o] = c * in_vol + best;
        }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool3d_backward(const std::vector<std::size_t>& argmax, const Shape& input_shape,
                             const Tensor<T>& grad_out) {
  if (argmax.size() != grad_out.size()) throw ShapeError("pool backward: grad_out does not match argmax");
  Tensor<T> gx(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += grad_out[i];
  return gx;
}

template <typename T>
Tensor<T> MaxPool3d<T>::forward(const Tensor<T>& x, Mode mode) {
  auto r = maxpool3d_forward(spec_, x);
  if (mode == Mode::Train) {
    input_shape_ = x.shape();
    argmax_ = std::move(r.argmax);
    // Runner-up gap per window.
    const Extent3 in = spatial_extent(x.shape());
    const Extent3 out = spec_.output_extent(in);
    const std::size_t in_vol = in.volume(), out_vol = out.volume();
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < argmax_.size(); ++o) {
      const std::size_t c = o / out_vol, rem = o % out_vol;
      const std::size_t ol = rem / (out.h * out.w), oh = (rem / out.w) % out.h, ow = rem % out.w;
      const std::size_t l0 = ol * spec_.stride.l, h0 = oh * spec_.stride.h, w0 = ow * spec_.stride.w;
      const T* xc = x.ptr() + c * in_vol;
      const T top = r.output[o];
      bool found = false;
      T second{};
      for (std::size_t l = l0; l < std::min(in.l, l0 + spec_.kernel.l); ++l)
        for (std::size_t h = h0; h < std::min(in.h, h0 + spec_.kernel.h); ++h)
          for (std::size_t w = w0; w < std::min(in.w, w0 + spec_.kernel.w); ++w) {
            const std::size_t idx = c * in_vol + (l * in.h + h) * in.w + w;
            if (idx == argmax_[o]) continue;
            if (!found || x[idx] > second) second = x[idx];
            found = true;
          }
      if (!found || (top == T{0} && second == T{0})) continue;
      margin = std::min(margin, static_cast<double>(top - second));
    }
    tie_margin_ = margin;
  }
  return std::move(r.output);
}

template <typename T>
Tensor<T> MaxPool3d<T>::backward(const Tensor<T>& grad_out) const {
  if (input_shape_.empty()) throw TrainingError("pool backward called without a training-mode forward");
  return maxpool3d_backward(argmax_, input_shape_, grad_out);
}

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> y(x.shape());
  double margin = std::numeric_limits<double>::infinity();
  if (mode == Mode::Train) mask_.assign(x.size(), 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    y[i] = v > T{0} ? v : T{0};
    if (mode == Mode::Train) {
      mask_[i] = v > T{0};
      // Exact zeros come from dead upstream units that stay dead under small
      // perturbations.
      if (v != T{0}) margin = std::min(margin, static_cast<double>(std::abs(v)));
    }
  }
  if (mode == Mode::Train) kink_margin_ = margin;
  return y;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out) const {
  if (grad_out.size() != mask_.size()) throw ShapeError("relu backward: shape mismatch with forward");
  Tensor<T> gx(grad_out.shape());
  for (std::size_t i = 0; i < mask_.size(); ++i) gx[i] = mask_[i] ? grad_out[i] : T{0};
  return gx;
}

// ---------------------------------------------------------------------------

namespace {

struct ChannelView {
  std::size_t outer, channels, inner;
};

ChannelView channel_view(const Shape& s, std::size_t axis, std::size_t channels) {
  if (axis >= s.size() || s[axis] != channels)
    throw ShapeError("batchnorm: expected " + std::to_string(channels) + " channels on axis " +
                     std::to_string(axis) + ", got " + shape_str(s));
  ChannelView v{1, channels, 1};
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

}  // namespace

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels, std::size_t channel_axis)
    : channels_(channels),
      axis_(channel_axis),
      gamma_({channels}, T{1}),
      beta_({channels}),
      grad_gamma_({channels}),
      grad_beta_({channels}),
      running_mean_({channels}),
      running_var_({channels}, T{1}) {}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, Mode mode) {
  const auto v = channel_view(x.shape(), axis_, channels_);
  const std::size_t m = v.outer * v.inner;
  Tensor<T> y(x.shape());
  mode_ = mode;
  shape_ = x.shape();
  auto at = [&](std::size_t o, std::size_t c, std::size_t i) { return (o * v.channels + c) * v.inner + i; };

  if (mode == Mode::Eval) {
    inv_std_.assign(channels_, 0.0);
    for (std::size_t c = 0; c < channels_; ++c) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + kEps);
      inv_std_[c] = inv;
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i) {
          const std::size_t k = at(o, c, i);
          y[k] = static_cast<T>(gamma_[c] * ((x[k] - running_mean_[c]) * inv) + beta_[c]);
        }
    }
    return y;
  }

  if (x.dim(0) < 2) throw DataError("batchnorm: training mode needs batch size >= 2 (degenerate variance)");
  xhat_ = Tensor<T>(x.shape());
  inv_std_.assign(channels_, 0.0);
  for (std::size_t c = 0; c < channels_; ++c) {
    double mean = 0.0;
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < v.inner; ++i) mean += x[at(o, c, i)];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < v.inner; ++i) {
        const double d = x[at(o, c, i)] - mean;
        var += d * d;
      }
    var /= static_cast<double>(m);
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_std_[c] = inv;
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t k = at(o, c, i);
        const auto xh = static_cast<T>((x[k] - mean) * inv);
        xhat_[k] = xh;
        y[k] = gamma_[c] * xh + beta_[c];
      }
    const double unbiased = var * static_cast<double>(m) / static_cast<double>(m - 1);
    running_mean_[c] = static_cast<T>((1.0 - kMomentum) * running_mean_[c] + kMomentum * mean);
    running_var_[c] = static_cast<T>((1.0 - kMomentum) * running_var_[c] + kMomentum * unbiased);
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.shape() != shape_) throw ShapeError("batchnorm backward: shape mismatch with forward");
  const auto v = channel_view(shape_, axis_, channels_);
  const std::size_t m = v.outer * v.inner;
  Tensor<T> gx(shape_);
  auto at = [&](std::size_t o, std::size_t c, std::size_t i) { return (o * v.channels + c) * v.inner + i; };
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    if (mode_ == Mode::Train) {
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i) {
          const std::size_t k = at(o, c, i);
          sum_dy += grad_out[k];
          sum_dy_xhat += static_cast<double>(grad_out[k]) * xhat_[k];
        }
      grad_beta_[c] += static_cast<T>(sum_dy);
      grad_gamma_[c] += static_cast<T>(sum_dy_xhat);
      const double scale = gamma_[c] * inv_std_[c] / static_cast<double>(m);
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i) {
          const std::size_t k = at(o, c, i);
          gx[k] = static_cast<T>(scale * (static_cast<double>(m) * grad_out[k] - sum_dy - xhat_[k] * sum_dy_xhat));
        }
    } else {
      const double scale = gamma_[c] * inv_std_[c];
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i) {
          const std::size_t k = at(o, c, i);
          gx[k] = static_cast<T>(scale * grad_out[k]);
        }
    }
  }
  return gx;
}

template <typename T>
void BatchNorm<T>::collect(const std::string& prefix, Slots<T>& out) {
  out.push_back({prefix + ".gamma", &gamma_, &grad_gamma_});
  out.push_back({prefix + ".beta", &beta_, &grad_beta_});
  out.push_back({prefix + ".running_mean", &running_mean_, nullptr});
  out.push_back({prefix + ".running_var", &running_var_, nullptr});
}

template <typename T>
Dropout<T>::Dropout(double p, std::uint64_t seed) : p_(p), rng_(seed) {
  if (p < 0.0 || p >= 1.0) throw RangeError("dropout: rate must be in [0, 1)");
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, Mode mode) {
  mode_ = mode;
  if (mode == Mode::Eval) return x;
  if (!frozen_ || mask_.size() != x.size()) {
    mask_.resize(x.size());
    const auto keep = static_cast<T>(1.0 / (1.0 - p_));
    for (auto& m : mask_) m = rng_.uniform01() >= p_ ? keep : T{0};
  }
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask_[i];
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& grad_out) const {
  if (mode_ == Mode::Eval) return grad_out;
  if (grad_out.size() != mask_.size()) throw ShapeError("dropout backward: shape mismatch with forward");
  Tensor<T> gx(grad_out.shape());
  for (std::size_t i = 0; i < mask_.size(); ++i) gx[i] = grad_out[i] * mask_[i];
  return gx;
}

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, Rng& rng)
    : in_(in),
      out_(out),
      weight_(he_uniform<T>(rng, {out, in}, in)),
      bias_({out}),
      grad_w_({out, in}),
      grad_b_({out}) {}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw ShapeError("linear: expected [N," + std::to_string(in_) + "], got " + shape_str(x.shape()));
  if (mode == Mode::Train) input_ = x;
  const std::size_t n = x.dim(0);
  Tensor<T> y({n, out_});
  for (std::size_t i = 0; i < n; ++i) {
    const T* xi = x.ptr() + i * in_;
    for (std::size_t o = 0; o < out_; ++o) {
      const T* w = weight_.ptr() + o * in_;
      T s{0};
      for (std::size_t k = 0; k < in_; ++k) s += w[k] * xi[k];
      y[i * out_ + o] = s + bias_[o];
    }
  }
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  const std::size_t n = input_.rank() == 2 ? input_.dim(0) : 0;
  if (grad_out.shape() != Shape{n, out_}) throw ShapeError("linear backward: grad_out shape mismatch");
  Tensor<T> gx({n, in_});
  for (std::size_t i = 0; i < n; ++i) {
    const T* xi = input_.ptr() + i * in_;
    T* gxi = gx.ptr() + i * in_;
    for (std::size_t o = 0; o < out_; ++o) {
      const T go = grad_out[i * out_ + o];
      grad_b_[o] += go;
      T* gw = grad_w_.ptr() + o * in_;
      const T* w = weight_.ptr() + o * in_;
      for (std::size_t k = 0; k < in_; ++k) {
        gw[k] += go * xi[k];
        gxi[k] += go * w[k];
      }
    }
  }
  return gx;
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, Slots<T>& out) {
  out.push_back({prefix + ".weight", &weight_, &grad_w_});
  out.push_back({prefix + ".bias", &bias_, &grad_b_});
}

// ---------------------------------------------------------------------------

namespace {
template <typename T>
T sigmoid(T x) {
  return T{1} / (T{1} + std::exp(-x));
}
}  // namespace

template <typename T>
Lstm<T>::Lstm(std::size_t input_size, std::size_t hidden_size, Rng& rng)
    : input_(input_size),
      hidden_(hidden_size),
      w_ih_(he_uniform<T>(rng, {4 * hidden_size, input_size}, input_size)),
      w_hh_(he_uniform<T>(rng, {4 * hidden_size, hidden_size}, hidden_size)),
      bias_({4 * hidden_size}),
      grad_ih_({4 * hidden_size, input_size}),
      grad_hh_({4 * hidden_size, hidden_size}),
      grad_b_({4 * hidden_size}) {}

template <typename T>
LstmResult<T> Lstm<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 3 || x.dim(2) != input_)
    throw ShapeError("lstm: expected [N,T," + std::to_string(input_) + "], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), steps = x.dim(1), H = hidden_, G = 4 * hidden_, D = input_;
  Tensor<T> gates({n, steps, G}), cell({n, steps, H}), hid({n, steps, H});
  std::vector<T> a(G);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      const T* xt = x.ptr() + (b * steps + t) * D;
      const T* hprev = t ? hid.ptr() + (b * steps + t - 1) * H : nullptr;
      const T* cprev = t ? cell.ptr() + (b * steps + t - 1) * H : nullptr;
      for (std::size_t r = 0; r < G; ++r) {
        T s = bias_[r];
        const T* wi = w_ih_.ptr() + r * D;
        for (std::size_t k = 0; k < D; ++k) s += wi[k] * xt[k];
        if (hprev) {
          const T* wh = w_hh_.ptr() + r * H;
          for (std::size_t k = 0; k < H; ++k) s += wh[k] * hprev[k];
        }
        a[r] = s;
      }
      T* gt = gates.ptr() + (b * steps + t) * G;
      T* ct = cell.ptr() + (b * steps + t) * H;
      T* ht = hid.ptr() + (b * steps + t) * H;
      for (std::size_t j = 0; j < H; ++j) {
        const T i = sigmoid(a[j]), f = sigmoid(a[H + j]), g = std::tanh(a[2 * H + j]), o = sigmoid(a[3 * H + j]);
        gt[j] = i;
        gt[H + j] = f;
        gt[2 * H + j] = g;
        gt[3 * H + j] = o;
        ct[j] = (cprev ? f * cprev[j] : T{0}) + i * g;
        ht[j] = o * std::tanh(ct[j]);
      }
    }
  }
  LstmResult<T> r{hid, Tensor<T>({n, H})};
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < H; ++j) r.final_hidden[b * H + j] = hid[(b * steps + steps - 1) * H + j];
  if (mode == Mode::Train) {
    x_ = x;
    gates_ = std::move(gates);
    cell_ = std::move(cell);
    hidden_states_ = std::move(hid);
  }
  return r;
}

template <typename T>
Tensor<T> Lstm<T>::backward(const Tensor<T>& grad_outputs) {
  if (grad_outputs.shape() != hidden_states_.shape() || x_.rank() != 3)
    throw ShapeError("lstm backward: grad shape mismatch with forward");
  const std::size_t n = x_.dim(0), steps = x_.dim(1), H = hidden_, G = 4 * hidden_, D = input_;
  Tensor<T> gx(x_.shape());
  std::vector<T> dh(H), dc(H), da(G), dh_prev(H);
  for (std::size_t b = 0; b < n; ++b) {
    std::fill(dh_prev.begin(), dh_prev.end(), T{0});
    std::fill(dc.begin(), dc.end(), T{0});
    for (std::size_t tt = steps; tt-- > 0;) {
      const std::size_t off = b * steps + tt;
      const T* gt = gates_.ptr() + off * G;
      const T* ct = cell_.ptr() + off * H;
      const T* cprev = tt ? cell_.ptr() + (off - 1) * H : nullptr;
      const T* hprev = tt ? hidden_states_.ptr() + (off - 1) * H : nullptr;
      for (std::size_t j = 0; j < H; ++j) dh[j] = grad_outputs[off * H + j] + dh_prev[j];
      for (std::size_t j = 0; j < H; ++j) {
        const T i = gt[j], f = gt[H + j], g = gt[2 * H + j], o = gt[3 * H + j];
        const T tc = std::tanh(ct[j]);
        const T d_o = dh[j] * tc;
        const T dct = dc[j] + dh[j] * o * (T{1} - tc * tc);
        const T di = dct * g, dg = dct * i, df = cprev ? dct * cprev[j] : T{0};
        da[j] = di * i * (T{1} - i);
        da[H + j] = df * f * (T{1} - f);
        da[2 * H + j] = dg * (T{1} - g * g);
        da[3 * H + j] = d_o * o * (T{1} - o);
        dc[j] = dct * f;
      }
      const T* xt = x_.ptr() + off * D;
      T* gxt = gx.ptr() + off * D;
      std::fill(dh_prev.begin(), dh_prev.end(), T{0});
      for (std::size_t r = 0; r < G; ++r) {
        const T d = da[r];
        grad_b_[r] += d;
        T* gwi = grad_ih_.ptr() + r * D;
        const T* wi = w_ih_.ptr() + r * D;
        for (std::size_t k = 0; k < D; ++k) {
          gwi[k] += d * xt[k];
          gxt[k] += d * wi[k];
        }
        if (hprev) {
          T* gwh = grad_hh_.ptr() + r * H;
          const T* wh = w_hh_.ptr() + r * H;
          for (std::size_t k = 0; k < H; ++k) {
            gwh[k] += d * hprev[k];
            dh_prev[k] += d * wh[k];
          }
        }
      }
    }
  }
  return gx;
}

template <typename T>
void Lstm<T>::collect(const std::string& prefix, Slots<T>& out) {
  out.push_back({prefix + ".w_ih", &w_ih_, &grad_ih_});
  out.push_back({prefix + ".w_hh", &w_hh_, &grad_hh_});
  out.push_back({prefix + ".bias", &bias_, &grad_b_});
}

#define STNET_INSTANTIATE(T)                                                                        \
  template Tensor<T> he_uniform(Rng&, Shape, std::size_t);                                          \
  template Tensor<T> conv3d_forward(const ConvSpec&, const Tensor<T>&, const Tensor<T>*, const Tensor<T>&); \
  template ConvGrads<T> conv3d_backward(const ConvSpec&, const Tensor<T>&, const Tensor<T>&,       \
                                        const Tensor<T>&, bool);                                    \
  template PoolResult<T> maxpool3d_forward(const PoolSpec&, const Tensor<T>&);                      \
  template Tensor<T> maxpool3d_backward(const std::vector<std::size_t>&, const Shape&, const Tensor<T>&); \
  template class Conv3d<T>;                                                                         \
  template class MaxPool3d<T>;                                                                      \
  template class ReLU<T>;                                                                           \
  template class BatchNorm<T>;                                                                      \
  template class Dropout<T>;                                                                        \
  template class Linear<T>;                                                                         \
  template class Lstm<T>;

STNET_INSTANTIATE(float)
STNET_INSTANTIATE(double)

#undef STNET_INSTANTIATE

}  // namespace stnet
