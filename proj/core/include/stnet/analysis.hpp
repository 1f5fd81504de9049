#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stnet/blocks.hpp"
#include "stnet/models.hpp"

namespace stnet {

/// Closed-form conv weight count of one block with a k x k x k budget:
///   Fully3D, Block1: k^3 * cin * cout
///   Block2, Block2Plus: k^2 * cin * cout + k * cout^2
///   Block3: 3k * cin * cout
std::uint64_t block_weight_count(BlockKind kind, std::uint64_t cin, std::uint64_t cout, std::uint64_t k = 3);
/// One bias per output channel per convolution.
std::uint64_t block_bias_count(BlockKind kind, std::uint64_t cout);

struct BlockCount {
  BlockKind kind;
  std::size_t cin, cout;
  std::uint64_t weights, biases;
};

struct ParamReport {
  std::string name;
  std::vector<BlockCount> per_block;
  std::uint64_t total_weights = 0;
  std::uint64_t total_biases = 0;
  /// fully3d total / this total, same channel ladder.
  double decrease_factor = 1.0;
  std::optional<std::uint64_t> flops;
};

/// Counted from the closed forms only; no tensors are allocated.
ParamReport count_params(const NetworkArch& arch);

/// baseline.total_weights / report.total_weights. Throws ArithmeticError on a
/// zero total.
double decrease_factor(const ParamReport& report, const ParamReport& baseline);

/// Rounds to one decimal, the precision of the comparison table.
double round1(double v);

/// Multiply-accumulates of every conv layer for one sample of shape
/// [C, L, H, W]: output positions x Cout x kernel volume x Cin. Pooling,
/// ReLU and the head are excluded.
std::uint64_t count_flops(const NetworkArch& arch, const Extent3& input);

/// MACs per conv layer, in execution order (branches in fixed order).
std::vector<std::uint64_t> conv_layer_flops(const NetworkArch& arch, const Extent3& input);

/// {"name", "per_block", "total_weights", "total_biases", "decrease_factor", "flops"?}
std::string report_json(const ParamReport& report);

}  // namespace stnet
