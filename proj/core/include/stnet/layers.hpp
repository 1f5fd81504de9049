#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "stnet/rng.hpp"
#include "stnet/tensor.hpp"

namespace stnet {

/// Per-axis triple in video order (L, H, W).
struct Extent3 {
  std::size_t l = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t volume() const { return l * h * w; }
  auto operator<=>(const Extent3&) const = default;
};

std::string extent_str(const Extent3& e);

/// Degenerate kernels used by the factorized blocks.
namespace kernels {
inline constexpr Extent3 full{3, 3, 3};
inline constexpr Extent3 plane_hw{1, 3, 3};
inline constexpr Extent3 plane_lh{3, 3, 1};
inline constexpr Extent3 plane_lw{3, 1, 3};
inline constexpr Extent3 axis_l{3, 1, 1};
inline constexpr Extent3 axis_h{1, 3, 1};
inline constexpr Extent3 axis_w{1, 1, 3};
}  // namespace kernels

struct ConvSpec {
  std::size_t cin = 1;
  std::size_t cout = 1;
  Extent3 kernel = kernels::full;
  Extent3 stride{1, 1, 1};
  Extent3 padding{1, 1, 1};
  bool bias = true;

  void validate() const;
  /// floor((in + 2p - k) / s) + 1 per axis; ShapeError if any axis is too small.
  Extent3 output_extent(const Extent3& in) const;
  std::size_t weight_count() const { return cout * cin * kernel.volume(); }
  Shape weight_shape() const { return {cout, cin, kernel.l, kernel.h, kernel.w}; }
};

struct PoolSpec {
  Extent3 kernel{2, 2, 2};
  Extent3 stride{2, 2, 2};

  /// Ceil mode: ceil((in - k) / s) + 1, never starting a window past the end.
  Extent3 output_extent(const Extent3& in) const;
};

enum class Mode { Train, Eval };

/// Named view of a parameter (grad != nullptr) or a buffer such as batch-norm
/// running statistics (grad == nullptr). Used by the optimizer, checkpoints,
/// and gradient checks.
template <typename T>
struct TensorSlot {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
};

template <typename T>
using Slots = std::vector<TensorSlot<T>>;

/// Uniform in [-b, b], b = sqrt(6 / fan_in).
template <typename T>
Tensor<T> he_uniform(Rng& rng, Shape shape, std::size_t fan_in);

Extent3 spatial_extent(const Shape& x);

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, no kernel flip). x: [N, Cin, L, H, W].

template <typename T>
Tensor<T> conv3d_forward(const ConvSpec& spec, const Tensor<T>& weight, const Tensor<T>* bias,
                         const Tensor<T>& x);

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
ConvGrads<T> conv3d_backward(const ConvSpec& spec, const Tensor<T>& weight, const Tensor<T>& x,
                             const Tensor<T>& grad_out, bool need_input_grad = true);

template <typename T>
class Conv3d {
 public:
  Conv3d(const ConvSpec& spec, Rng& rng);

  const ConvSpec& spec() const { return spec_; }
  Tensor<T>& weight() { return weight_; }
  const Tensor<T>& weight() const { return weight_; }
  Tensor<T>& bias() { return bias_; }
  const Tensor<T>& bias() const { return bias_; }
  const Tensor<T>& weight_grad() const { return grad_w_; }
  const Tensor<T>& bias_grad() const { return grad_b_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  /// Accumulates parameter gradients; returns dL/dx (empty [1] tensor when
  /// need_input_grad is false).
  Tensor<T> backward(const Tensor<T>& grad_out, bool need_input_grad = true);
  void collect(const std::string& prefix, Slots<T>& out);

 private:
  ConvSpec spec_;
  Tensor<T> weight_, bias_, grad_w_, grad_b_;
  Tensor<T> input_;
  bool has_input_ = false;
};

// ---------------------------------------------------------------------------
// Max pooling with ceil mode; argmax holds flat input offsets, ties go to the
// lowest row-major index.

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;
};

template <typename T>
PoolResult<T> maxpool3d_forward(const PoolSpec& spec, const Tensor<T>& x);

template <typename T>
Tensor<T> maxpool3d_backward(const std::vector<std::size_t>& argmax, const Shape& input_shape,
                             const Tensor<T>& grad_out);

template <typename T>
class MaxPool3d {
 public:
  explicit MaxPool3d(PoolSpec spec = {}) : spec_(spec) {}

  const PoolSpec& spec() const { return spec_; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out) const;
  /// Smallest gap between the winner and runner-up of any window seen in the
  /// last forward. Windows tied at exactly zero are skipped: they come from
  /// dead ReLUs and carry no gradient.
  double tie_margin() const { return tie_margin_; }

 private:
  PoolSpec spec_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
  double tie_margin_ = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out) const;
  /// min |x| over the nonzero entries of the last training-mode input.
  double kink_margin() const { return kink_margin_; }

 private:
  std::vector<std::uint8_t> mask_;
  double kink_margin_ = std::numeric_limits<double>::infinity();
};

/// Batch normalization per channel over every other axis. `channel_axis`
/// selects the channel dimension: 1 for [N,C] and [N,C,L,H,W], 2 for [N,T,D].
template <typename T>
class BatchNorm {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm(std::size_t channels, std::size_t channel_axis = 1);

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(const std::string& prefix, Slots<T>& out);

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }
  const Tensor<T>& running_mean() const { return running_mean_; }
  const Tensor<T>& running_var() const { return running_var_; }

 private:
  std::size_t channels_, axis_;
  Tensor<T> gamma_, beta_, grad_gamma_, grad_beta_, running_mean_, running_var_;
  // Cached from forward.
  Shape shape_;
  Mode mode_ = Mode::Eval;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
};

template <typename T>
class Dropout {
 public:
  explicit Dropout(double p = 0.5, std::uint64_t seed = 0);

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out) const;
  /// When frozen, training-mode forward reuses the previous mask (for
  /// finite-difference checks).
  void freeze_mask(bool frozen) { frozen_ = frozen; }
  double rate() const { return p_; }

 private:
  double p_;
  Rng rng_;
  bool frozen_ = false;
  Mode mode_ = Mode::Eval;
  std::vector<T> mask_;
};

/// y = x W^T + b, x: [N, in], W: [out, in].
template <typename T>
class Linear {
 public:
  Linear(std::size_t in, std::size_t out, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(const std::string& prefix, Slots<T>& out);

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

 private:
  std::size_t in_, out_;
  Tensor<T> weight_, bias_, grad_w_, grad_b_;
  Tensor<T> input_;
};

template <typename T>
struct LstmResult {
  Tensor<T> outputs;       // [N, T, H]
  Tensor<T> final_hidden;  // [N, H]
};

/// Single-layer LSTM with zero initial state. Gate rows are stacked in the
/// order input, forget, cell, output: w_ih [4H, D], w_hh [4H, H], bias [4H].
template <typename T>
class Lstm {
 public:
  Lstm(std::size_t input_size, std::size_t hidden_size, Rng& rng);

  LstmResult<T> forward(const Tensor<T>& x, Mode mode);
  /// grad_outputs: [N, T, H]; gradient w.r.t. the final hidden state belongs
  /// in the last time step. Returns dL/dx.
  Tensor<T> backward(const Tensor<T>& grad_outputs);
  void collect(const std::string& prefix, Slots<T>& out);

  std::size_t input_size() const { return input_; }
  std::size_t hidden_size() const { return hidden_; }
  Tensor<T>& w_ih() { return w_ih_; }
  Tensor<T>& w_hh() { return w_hh_; }
  Tensor<T>& bias() { return bias_; }

 private:
  std::size_t input_, hidden_;
  Tensor<T> w_ih_, w_hh_, bias_, grad_ih_, grad_hh_, grad_b_;
  Tensor<T> x_;
  // Per step activations: gates [N, T, 4H] post-nonlinearity, cell and hidden [N, T, H].
  Tensor<T> gates_, cell_, hidden_states_;
};

}  // namespace stnet
