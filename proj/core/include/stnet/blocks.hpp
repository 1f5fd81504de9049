#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stnet/layers.hpp"

namespace stnet {

enum class BlockKind { Fully3D, Block1, Block2, Block2Plus, Block3 };

inline constexpr BlockKind kAllBlockKinds[] = {BlockKind::Fully3D, BlockKind::Block1, BlockKind::Block2,
                                               BlockKind::Block2Plus, BlockKind::Block3};

/// "fully3d", "block1", "block2", "block2plus", "block3".
std::string_view block_kind_name(BlockKind kind);
/// Throws UsageError on an unknown name.
BlockKind parse_block_kind(std::string_view name);

struct BlockSpec {
  BlockKind kind = BlockKind::Fully3D;
  std::size_t cin = 1;
  std::size_t cout = 1;
  Extent3 stride{2, 2, 2};
  Extent3 padding{1, 1, 1};
  PoolSpec pool{};

  void validate() const;
};

/// One parallel path of a block: a chain of convolutions.
struct BranchLayout {
  std::vector<ConvSpec> convs;
  bool relu_between = false;  // ReLU between consecutive convs (Block2Plus)
  bool relu_after = false;    // ReLU on the branch output before fusion (Block3)
};

/// Convolution geometry of a block. Axes where a kernel is 1 get zero
/// padding. Parallel branches (Block1, Block3) stride every axis so that their
/// outputs align; Block2 strides H/W in the planar conv and L in the temporal
/// conv.
std::vector<BranchLayout> block_layout(const BlockSpec& spec);

/// Fully3D: conv 3x3x3 -> ReLU -> pool.
/// Block1: sum of HW, LH, LW planar convs -> ReLU -> pool.
/// Block2: HW conv -> L conv -> ReLU -> pool. Block2Plus adds a ReLU between.
/// Block3: sum of ReLU(L conv), ReLU(H conv), ReLU(W conv) -> ReLU -> pool.
template <typename T>
class Block {
 public:
  Block(const BlockSpec& spec, Rng& rng);

  const BlockSpec& spec() const { return spec_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out, bool need_input_grad = true);
  void collect(const std::string& prefix, Slots<T>& out);

  /// Convolutions in branch order (HW, LH, LW / L, H, W / planar, temporal).
  std::vector<Conv3d<T>*> convs();
  std::size_t weight_count() const;
  std::size_t bias_count() const;
  /// Distance of the last training forward from ReLU kinks and pooling ties.
  double kink_margin() const;

 private:
  struct Branch {
    std::vector<Conv3d<T>> convs;
    std::vector<ReLU<T>> between;
    std::optional<ReLU<T>> after;
  };

  BlockSpec spec_;
  std::vector<Branch> branches_;
  ReLU<T> relu_;
  MaxPool3d<T> pool_;
};

}  // namespace stnet
