#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "stnet/blocks.hpp"
#include "stnet/layers.hpp"

namespace stnet {

/// Channel ladder for the four video blocks: block i maps c[i] -> c[i+1].
using ChannelLadder = std::array<std::size_t, 5>;
inline constexpr ChannelLadder kDefaultLadder{3, 64, 64, 128, 128};

inline constexpr std::size_t kSegmentCount = 87;
inline constexpr std::size_t kPositiveClass = 1;  // intoxicated

/// Declarative description of a four-block video network.
struct NetworkArch {
  std::string name;
  std::array<BlockSpec, 4> blocks;
  ChannelLadder channels = kDefaultLadder;
};

/// The seven video rows, in comparison-table order.
const std::vector<std::string>& video_arch_names();
/// All names accepted by build_arch.
const std::vector<std::string>& arch_names();
bool is_video_arch(std::string_view name);

/// Throws UsageError for unknown names.
NetworkArch video_arch(std::string_view name, const ChannelLadder& channels = kDefaultLadder);

enum class InputKind {
  Video,           // [N, C, L, H, W]
  PooledFeatures,  // [N, F]
  Sequence,        // [N, T, D]
};

struct ArchOptions {
  ChannelLadder channels = kDefaultLadder;
  /// Frame-level audio feature count F. The DNN input is 2F (mean and
  /// standard deviation per feature).
  std::size_t audio_features = 16;
  /// Per-frame feature dimension for feat-lstm.
  std::size_t feature_dim = 4096;
  std::size_t lstm_hidden = 128;
  double dropout = 0.5;
};

template <typename T>
class Model {
 public:
  virtual ~Model() = default;

  virtual const std::string& name() const = 0;
  virtual InputKind input_kind() const = 0;
  /// Logits [N, 2].
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  /// Accumulates parameter gradients from dL/dlogits.
  virtual void backward(const Tensor<T>& grad_logits) = 0;
  /// Parameters and buffers in a fixed order.
  virtual void collect(Slots<T>& out) = 0;
  virtual double kink_margin() const { return std::numeric_limits<double>::infinity(); }
  virtual void freeze_dropout(bool /*frozen*/) {}

  Slots<T> slots() {
    Slots<T> s;
    collect(s);
    return s;
  }
  void zero_grad() {
    for (auto& s : slots())
      if (s.grad) s.grad->fill(T{0});
  }
};

template <typename T>
class VideoNet final : public Model<T> {
 public:
  VideoNet(const NetworkArch& arch, Rng& rng);

  const std::string& name() const override { return arch_.name; }
  InputKind input_kind() const override { return InputKind::Video; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  void backward(const Tensor<T>& grad_logits) override;
  void collect(Slots<T>& out) override;
  double kink_margin() const override;

  const NetworkArch& arch() const { return arch_; }
  std::vector<Block<T>>& blocks() { return blocks_; }
  Linear<T>& head() { return head_; }
  std::size_t conv_weight_count() const;

 private:
  NetworkArch arch_;
  std::vector<Block<T>> blocks_;
  Linear<T> head_;
  Shape pooled_from_;
};

/// linear -> BN -> ReLU -> dropout, twice, then linear -> 2.
template <typename T>
class AudioDnn final : public Model<T> {
 public:
  AudioDnn(std::string name, std::size_t input, std::size_t hidden1, std::size_t hidden2, double dropout,
           Rng& rng);

  const std::string& name() const override { return name_; }
  InputKind input_kind() const override { return InputKind::PooledFeatures; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  void backward(const Tensor<T>& grad_logits) override;
  void collect(Slots<T>& out) override;
  double kink_margin() const override;
  void freeze_dropout(bool frozen) override;

  std::size_t input_size() const { return fc1_.in_features(); }

 private:
  std::string name_;
  Linear<T> fc1_;
  BatchNorm<T> bn1_;
  ReLU<T> relu1_;
  Dropout<T> drop1_;
  Linear<T> fc2_;
  BatchNorm<T> bn2_;
  ReLU<T> relu2_;
  Dropout<T> drop2_;
  Linear<T> out_;
};

/// Optional per-feature BN -> single-layer LSTM -> final hidden -> linear -> 2.
/// With `fixed_steps` > 0 the sequence length must match exactly.
template <typename T>
class SequenceLstm final : public Model<T> {
 public:
  SequenceLstm(std::string name, std::size_t input, std::size_t hidden, bool input_batchnorm,
               std::size_t fixed_steps, Rng& rng);

  const std::string& name() const override { return name_; }
  InputKind input_kind() const override { return InputKind::Sequence; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  void backward(const Tensor<T>& grad_logits) override;
  void collect(Slots<T>& out) override;

  Lstm<T>& lstm() { return lstm_; }
  Linear<T>& head() { return head_; }

 private:
  std::string name_;
  std::size_t fixed_steps_;
  std::unique_ptr<BatchNorm<T>> bn_;
  Lstm<T> lstm_;
  Linear<T> head_;
  Shape input_shape_;
};

/// Video rows, audio-dnn-512, audio-dnn-256, audio-lstm-fixed,
/// audio-lstm-variable, feat-lstm. Throws UsageError on unknown names.
template <typename T>
std::unique_ptr<Model<T>> build_arch(std::string_view name, Rng& rng, const ArchOptions& options = {});

/// Numerically stable softmax over the last axis of [N, K] logits.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

}  // namespace stnet
