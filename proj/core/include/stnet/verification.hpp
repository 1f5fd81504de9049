#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stnet/blocks.hpp"
#include "stnet/layers.hpp"

namespace stnet {

struct OracleReport {
  std::string case_id;
  double max_abs_diff = 0.0;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::uint64_t seed = 0;  // replays the failing input
  std::string detail;

  /// One JSON object, keys sorted, no trailing newline.
  std::string json() const;
};

inline constexpr double kOracleTol64 = 1e-10;
inline constexpr double kOracleTol32 = 1e-5;
inline constexpr double kGradTol = 1e-6;
inline constexpr double kGradTolModel = 1e-5;
inline constexpr double kKinkMargin = 1e-3;

/// |a - b| / max(|a|, |b|, 1e-12).
double rel_err(double a, double b);

// ---------------------------------------------------------------------------
// Reference implementations written as literal nested loops.

/// out[n,co,l,h,w] = b[co] + sum x_padded[n,ci,l*s+dl,h*s+dh,w*s+dw] * wt[co,ci,dl,dh,dw]
template <typename T>
Tensor<T> conv_oracle(const ConvSpec& spec, const Tensor<T>& weight, const Tensor<T>* bias, const Tensor<T>& x);

/// Scans windows from the start, stepping by the stride until a window
/// reaches the end of the axis.
template <typename T>
Tensor<T> pool_oracle(const PoolSpec& spec, const Tensor<T>& x);

/// Recomputes a block from its convolution weights with conv_oracle,
/// elementwise sums, ReLU and pool_oracle.
template <typename T>
Tensor<T> block_oracle(Block<T>& block, const Tensor<T>& x);

/// Step-by-step scalar recurrence; returns the outputs [N, T, H].
template <typename T>
Tensor<T> lstm_oracle(Lstm<T>& lstm, const Tensor<T>& x);

// ---------------------------------------------------------------------------
// Seeded oracle cases in 64-bit arithmetic.

/// Random conv with the given kernel, stride in {1,2}, extents <= 6.
OracleReport conv_oracle_case(std::uint64_t seed, const Extent3& kernel);
/// Random pooling input with extents <= 6.
OracleReport pool_oracle_case(std::uint64_t seed);
OracleReport block_oracle_case(BlockKind kind, std::uint64_t seed);
OracleReport lstm_oracle_case(std::uint64_t seed);

// ---------------------------------------------------------------------------
// Finite differences.

/// Central differences of fn around params, one coordinate at a time. params
/// is restored before returning.
std::vector<double> finite_diff(const std::function<double(std::span<const double>)>& fn, std::vector<double> params,
                                double eps);

enum class GradTarget { Layer, Block, Model };

GradTarget parse_grad_target(std::string_view name);
std::string_view grad_target_name(GradTarget target);

/// Layer names accepted by gradcheck.
const std::vector<std::string>& gradcheck_layer_names();
/// Model names accepted by gradcheck (every architecture, built small).
const std::vector<std::string>& gradcheck_model_names();

struct GradcheckOptions {
  double eps = 1e-5;
  double tol = kGradTol;
  /// Absolute agreement accepted when the relative test fails. Central
  /// differences in 64-bit carry about 1e-11 of rounding noise, so gradients
  /// that are zero (a bias feeding batch norm) or tiny cannot pass a purely
  /// relative test.
  double abs_floor = 1e-9;
  /// Coordinates checked per tensor; larger tensors are subsampled.
  std::size_t max_coords = 48;
  std::size_t max_resamples = 64;
};

/// Compares analytic gradients of every parameter and of the input against
/// central differences, in 64-bit arithmetic. Inputs are redrawn while the
/// forward pass sits within kKinkMargin of a ReLU kink or pooling tie.
OracleReport gradcheck(GradTarget target, std::string_view name, std::uint64_t seed,
                       const GradcheckOptions& options = {});

// ---------------------------------------------------------------------------

struct Table2Row {
  std::string arch;
  double published_total;
  double published_factor;  // 0 where the table leaves the cell empty
};

const std::vector<Table2Row>& table2_rows();

/// One report per row: closed-form count equals the allocated count, the
/// total is within 1% of the printed value and the decrease factor rounds
/// to the printed one.
std::vector<OracleReport> table2_audit();

}  // namespace stnet
