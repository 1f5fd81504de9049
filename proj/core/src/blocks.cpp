#include "stnet/blocks.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "stnet/errors.hpp"

namespace stnet {

std::string_view block_kind_name(BlockKind kind) {
  switch (kind) {
    case BlockKind::Fully3D: return "fully3d";
    case BlockKind::Block1: return "block1";
    case BlockKind::Block2: return "block2";
    case BlockKind::Block2Plus: return "block2plus";
    case BlockKind::Block3: return "block3";
  }
  return "?";
}

BlockKind parse_block_kind(std::string_view name) {
  for (auto k : kAllBlockKinds)
    if (block_kind_name(k) == name) return k;
  throw UsageError("unknown block kind '" + std::string(name) + "'");
}

void BlockSpec::validate() const {
  if (cin == 0 || cout == 0) throw ShapeError("block: channel counts must be >= 1");
  if (stride.l == 0 || stride.h == 0 || stride.w == 0) throw ShapeError("block: stride must be >= 1");
}

namespace {

// stride_mask selects which axes receive the block stride.
ConvSpec factored(Extent3 kernel, std::size_t cin, std::size_t cout, const BlockSpec& b, Extent3 stride_mask) {
  ConvSpec c;
  c.cin = cin;
  c.cout = cout;
  c.kernel = kernel;
  c.padding = {kernel.l == 1 ? 0 : b.padding.l, kernel.h == 1 ? 0 : b.padding.h, kernel.w == 1 ? 0 : b.padding.w};
  c.stride = {stride_mask.l ? b.stride.l : 1, stride_mask.h ? b.stride.h : 1, stride_mask.w ? b.stride.w : 1};
  return c;
}

constexpr Extent3 kAllAxes{1, 1, 1};

}  // namespace

std::vector<BranchLayout> block_layout(const BlockSpec& spec) {
  spec.validate();
  const auto ci = spec.cin, co = spec.cout;
  switch (spec.kind) {
    case BlockKind::Fully3D:
      return {{{factored(kernels::full, ci, co, spec, kAllAxes)}}};
    case BlockKind::Block1:
      return {{{factored(kernels::plane_hw, ci, co, spec, kAllAxes)}},
              {{factored(kernels::plane_lh, ci, co, spec, kAllAxes)}},
              {{factored(kernels::plane_lw, ci, co, spec, kAllAxes)}}};
    case BlockKind::Block2:
    case BlockKind::Block2Plus: {
      BranchLayout b;
      b.convs = {factored(kernels::plane_hw, ci, co, spec, {0, 1, 1}),
                 factored(kernels::axis_l, co, co, spec, {1, 0, 0})};
      b.relu_between = spec.kind == BlockKind::Block2Plus;
      return {b};
    }
    case BlockKind::Block3: {
      std::vector<BranchLayout> out;
      for (auto k : {kernels::axis_l, kernels::axis_h, kernels::axis_w}) {
        BranchLayout b;
        b.convs = {factored(k, ci, co, spec, kAllAxes)};
        b.relu_after = true;
        out.push_back(b);
      }
      return out;
    }
  }
  throw std::logic_error("unhandled block kind");
}

template <typename T>
Block<T>::Block(const BlockSpec& spec, Rng& rng) : spec_(spec), pool_(spec.pool) {
  for (const auto& layout : block_layout(spec)) {
    Branch br;
    for (const auto& c : layout.convs) br.convs.emplace_back(c, rng);
    if (layout.relu_between) br.between.resize(layout.convs.size() - 1);
    if (layout.relu_after) br.after.emplace();
    branches_.push_back(std::move(br));
  }
}

template <typename T>
Tensor<T> Block<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 5 || x.dim(1) != spec_.cin)
    throw ShapeError("block " + std::string(block_kind_name(spec_.kind)) + ": expected " +
                     std::to_string(spec_.cin) + " input channels, got " + shape_str(x.shape()));
  std::optional<Tensor<T>> fused;
  for (auto& br : branches_) {
    Tensor<T> h = br.convs[0].forward(x, mode);
    for (std::size_t i = 1; i < br.convs.size(); ++i) {
      if (!br.between.empty()) h = br.between[i - 1].forward(h, mode);
      h = br.convs[i].forward(h, mode);
    }
    if (br.after) h = br.after->forward(h, mode);
    if (!fused) {
      fused = std::move(h);
    } else {
      if (fused->shape() != h.shape())
        throw std::logic_error("block branch outputs are misaligned: " + shape_str(fused->shape()) + " vs " +
                               shape_str(h.shape()));
      add_inplace(*fused, h);
    }
  }
  return pool_.forward(relu_.forward(*fused, mode), mode);
}

template <typename T>
Tensor<T> Block<T>::backward(const Tensor<T>& grad_out, bool need_input_grad) {
  const Tensor<T> g_fused = relu_.backward(pool_.backward(grad_out));
  std::optional<Tensor<T>> gx;
  for (auto& br : branches_) {
    Tensor<T> g = br.after ? br.after->backward(g_fused) : g_fused;
    for (std::size_t i = br.convs.size(); i-- > 1;) {
      g = br.convs[i].backward(g, true);
      if (!br.between.empty()) g = br.between[i - 1].backward(g);
    }
    Tensor<T> gi = br.convs[0].backward(g, need_input_grad);
    if (!need_input_grad) continue;
    if (!gx)
      gx = std::move(gi);
    else
      add_inplace(*gx, gi);
  }
  return gx ? std::move(*gx) : Tensor<T>();
}

template <typename T>
void Block<T>::collect(const std::string& prefix, Slots<T>& out) {
  for (std::size_t b = 0; b < branches_.size(); ++b)
    for (std::size_t i = 0; i < branches_[b].convs.size(); ++i)
      branches_[b].convs[i].collect(prefix + ".branch" + std::to_string(b) + ".conv" + std::to_string(i), out);
}

template <typename T>
std::vector<Conv3d<T>*> Block<T>::convs() {
  std::vector<Conv3d<T>*> out;
  for (auto& br : branches_)
    for (auto& c : br.convs) out.push_back(&c);
  return out;
}

template <typename T>
std::size_t Block<T>::weight_count() const {
  std::size_t n = 0;
  for (const auto& br : branches_)
    for (const auto& c : br.convs) n += c.weight().size();
  return n;
}

template <typename T>
std::size_t Block<T>::bias_count() const {
  std::size_t n = 0;
  for (const auto& br : branches_)
    for (const auto& c : br.convs)
      if (c.spec().bias) n += c.bias().size();
  return n;
}

template <typename T>
double Block<T>::kink_margin() const {
  double m = std::min(relu_.kink_margin(), pool_.tie_margin());
  for (const auto& br : branches_) {
    for (const auto& r : br.between) m = std::min(m, r.kink_margin());
    if (br.after) m = std::min(m, br.after->kink_margin());
  }
  return m;
}

template class Block<float>;
template class Block<double>;

}  // namespace stnet
