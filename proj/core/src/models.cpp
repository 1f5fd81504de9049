#include "stnet/models.hpp"

#include <algorithm>
#include <cmath>

#include "stnet/errors.hpp"

namespace stnet {

namespace {

struct VideoRow {
  const char* name;
  BlockKind tail;
  std::size_t replaced;  // trailing blocks that use `tail`
};

constexpr VideoRow kVideoRows[] = {
    {"fully3d", BlockKind::Fully3D, 0},         {"two-block1", BlockKind::Block1, 2},
    {"two-block2", BlockKind::Block2, 2},       {"two-block2plus", BlockKind::Block2Plus, 2},
    {"three-block2", BlockKind::Block2, 3},     {"three-block2plus", BlockKind::Block2Plus, 3},
    {"two-block3", BlockKind::Block3, 2},
};

}  // namespace

const std::vector<std::string>& video_arch_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& r : kVideoRows) v.emplace_back(r.name);
    return v;
  }();
  return names;
}

const std::vector<std::string>& arch_names() {
  static const std::vector<std::string> names = [] {
    auto v = video_arch_names();
    for (const char* n : {"audio-dnn-512", "audio-dnn-256", "audio-lstm-fixed", "audio-lstm-variable", "feat-lstm"})
      v.emplace_back(n);
    return v;
  }();
  return names;
}

bool is_video_arch(std::string_view name) {
  const auto& v = video_arch_names();
  return std::find(v.begin(), v.end(), name) != v.end();
}

NetworkArch video_arch(std::string_view name, const ChannelLadder& channels) {
  for (const auto& row : kVideoRows) {
    if (row.name != name) continue;
    NetworkArch arch;
    arch.name = row.name;
    arch.channels = channels;
    for (std::size_t i = 0; i < 4; ++i) {
      BlockSpec b;
      b.kind = i >= 4 - row.replaced ? row.tail : BlockKind::Fully3D;
      b.cin = channels[i];
      b.cout = channels[i + 1];
      b.validate();
      arch.blocks[i] = b;
    }
    return arch;
  }
  throw UsageError("unknown video architecture '" + std::string(name) + "'");
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: expected [N,K] logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.ptr() + i * k;
    const T m = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(z[j] - m));
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] = static_cast<T>(std::exp(static_cast<double>(z[j] - m)) / denom);
  }
  return p;
}

// ---------------------------------------------------------------------------

template <typename T>
VideoNet<T>::VideoNet(const NetworkArch& arch, Rng& rng)
    : arch_(arch),
      blocks_([&] {
        std::vector<Block<T>> b;
        b.reserve(4);
        for (const auto& spec : arch.blocks) b.emplace_back(spec, rng);
        return b;
      }()),
      head_(arch.channels[4], 2, rng) {}

template <typename T>
Tensor<T> VideoNet<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 5 || x.dim(1) != arch_.channels[0])
    throw ShapeError("video model expects [N," + std::to_string(arch_.channels[0]) + ",L,H,W], got " +
                     shape_str(x.shape()));
  Tensor<T> h = blocks_[0].forward(x, mode);
  for (std::size_t i = 1; i < blocks_.size(); ++i) h = blocks_[i].forward(h, mode);

  // Global average pool over (L, H, W).
  const std::size_t n = h.dim(0), c = h.dim(1), vol = h.dim(2) * h.dim(3) * h.dim(4);
  Tensor<T> pooled({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    T s{0};
    const T* src = h.ptr() + i * vol;
    for (std::size_t j = 0; j < vol; ++j) s += src[j];
    pooled[i] = s / static_cast<T>(vol);
  }
  pooled_from_ = h.shape();
  return head_.forward(pooled, mode);
}

template <typename T>
void VideoNet<T>::backward(const Tensor<T>& grad_logits) {
  const Tensor<T> gp = head_.backward(grad_logits);
  const auto& s = pooled_from_;
  const std::size_t vol = s[2] * s[3] * s[4];
  Tensor<T> g(s);
  for (std::size_t i = 0; i < s[0] * s[1]; ++i) {
    const T v = gp[i] / static_cast<T>(vol);
    std::fill(g.ptr() + i * vol, g.ptr() + (i + 1) * vol, v);
  }
  for (std::size_t i = blocks_.size(); i-- > 0;) g = blocks_[i].backward(g, i > 0);
}

template <typename T>
void VideoNet<T>::collect(Slots<T>& out) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect("block" + std::to_string(i), out);
  head_.collect("head", out);
}

template <typename T>
double VideoNet<T>::kink_margin() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& b : blocks_) m = std::min(m, b.kink_margin());
  return m;
}

template <typename T>
std::size_t VideoNet<T>::conv_weight_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.weight_count();
  return n;
}

// ---------------------------------------------------------------------------

template <typename T>
AudioDnn<T>::AudioDnn(std::string name, std::size_t input, std::size_t hidden1, std::size_t hidden2,
                      double dropout, Rng& rng)
    : name_(std::move(name)),
      fc1_(input, hidden1, rng),
      bn1_(hidden1),
      drop1_(dropout, rng.next_u64()),
      fc2_(hidden1, hidden2, rng),
      bn2_(hidden2),
      drop2_(dropout, rng.next_u64()),
      out_(hidden2, 2, rng) {}

template <typename T>
Tensor<T> AudioDnn<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 2 || x.dim(1) != fc1_.in_features())
    throw ShapeError(name_ + " expects [N," + std::to_string(fc1_.in_features()) + "], got " + shape_str(x.shape()));
  Tensor<T> h = drop1_.forward(relu1_.forward(bn1_.forward(fc1_.forward(x, mode), mode), mode), mode);
  h = drop2_.forward(relu2_.forward(bn2_.forward(fc2_.forward(h, mode), mode), mode), mode);
  return out_.forward(h, mode);
}

template <typename T>
void AudioDnn<T>::backward(const Tensor<T>& grad_logits) {
  Tensor<T> g = out_.backward(grad_logits);
  g = fc2_.backward(bn2_.backward(relu2_.backward(drop2_.backward(g))));
  fc1_.backward(bn1_.backward(relu1_.backward(drop1_.backward(g))));
}

template <typename T>
void AudioDnn<T>::collect(Slots<T>& out) {
  fc1_.collect("fc1", out);
  bn1_.collect("bn1", out);
  fc2_.collect("fc2", out);
  bn2_.collect("bn2", out);
  out_.collect("out", out);
}

template <typename T>
double AudioDnn<T>::kink_margin() const {
  return std::min(relu1_.kink_margin(), relu2_.kink_margin());
}

template <typename T>
void AudioDnn<T>::freeze_dropout(bool frozen) {
  drop1_.freeze_mask(frozen);
  drop2_.freeze_mask(frozen);
}

// ---------------------------------------------------------------------------

template <typename T>
SequenceLstm<T>::SequenceLstm(std::string name, std::size_t input, std::size_t hidden, bool input_batchnorm,
                              std::size_t fixed_steps, Rng& rng)
    : name_(std::move(name)),
      fixed_steps_(fixed_steps),
      bn_(input_batchnorm ? std::make_unique<BatchNorm<T>>(input, 2) : nullptr),
      lstm_(input, hidden, rng),
      head_(hidden, 2, rng) {}

template <typename T>
Tensor<T> SequenceLstm<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 3 || x.dim(2) != lstm_.input_size())
    throw ShapeError(name_ + " expects [N,T," + std::to_string(lstm_.input_size()) + "], got " +
                     shape_str(x.shape()));
  if (fixed_steps_ && x.dim(1) != fixed_steps_)
    throw ShapeError(name_ + " expects exactly " + std::to_string(fixed_steps_) + " steps, got " +
                     std::to_string(x.dim(1)));
  input_shape_ = x.shape();
  auto r = lstm_.forward(bn_ ? bn_->forward(x, mode) : x, mode);
  return head_.forward(r.final_hidden, mode);
}

template <typename T>
void SequenceLstm<T>::backward(const Tensor<T>& grad_logits) {
  const Tensor<T> gh = head_.backward(grad_logits);
  const std::size_t n = input_shape_[0], steps = input_shape_[1], H = lstm_.hidden_size();
  Tensor<T> gout({n, steps, H});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < H; ++j) gout[(b * steps + steps - 1) * H + j] = gh[b * H + j];
  const Tensor<T> gx = lstm_.backward(gout);
  if (bn_) bn_->backward(gx);
}

template <typename T>
void SequenceLstm<T>::collect(Slots<T>& out) {
  if (bn_) bn_->collect("bn", out);
  lstm_.collect("lstm", out);
  head_.collect("head", out);
}

// ---------------------------------------------------------------------------

template <typename T>
std::unique_ptr<Model<T>> build_arch(std::string_view name, Rng& rng, const ArchOptions& options) {
  if (is_video_arch(name)) return std::make_unique<VideoNet<T>>(video_arch(name, options.channels), rng);
  const std::size_t pooled = 2 * options.audio_features;
  if (name == "audio-dnn-512")
    return std::make_unique<AudioDnn<T>>(std::string(name), pooled, 512, 256, options.dropout, rng);
  if (name == "audio-dnn-256")
    return std::make_unique<AudioDnn<T>>(std::string(name), pooled, 256, 128, options.dropout, rng);
  if (name == "audio-lstm-fixed" || name == "audio-lstm-variable")
    return std::make_unique<SequenceLstm<T>>(std::string(name), options.audio_features, options.lstm_hidden, false,
                                             kSegmentCount, rng);
  if (name == "feat-lstm")
    return std::make_unique<SequenceLstm<T>>(std::string(name), options.feature_dim, options.lstm_hidden, true, 0,
                                             rng);
  throw UsageError("unknown architecture '" + std::string(name) + "'");
}

template Tensor<float> softmax(const Tensor<float>&);
template Tensor<double> softmax(const Tensor<double>&);
template class VideoNet<float>;
template class VideoNet<double>;
template class AudioDnn<float>;
template class AudioDnn<double>;
template class SequenceLstm<float>;
template class SequenceLstm<double>;
template std::unique_ptr<Model<float>> build_arch(std::string_view, Rng&, const ArchOptions&);
template std::unique_ptr<Model<double>> build_arch(std::string_view, Rng&, const ArchOptions&);

}  // namespace stnet
