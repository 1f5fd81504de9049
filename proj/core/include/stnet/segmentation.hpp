#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "stnet/dataset.hpp"

namespace stnet {

enum class SegmentMode { Fixed, Variable };

/// Fixed mode: 75 ms windows overlapping by 30 ms (45 ms hop), the first 87
/// taken from the start of the stream. Variable mode: 87 equal contiguous
/// windows spanning the whole duration.
struct SegmentationSpec {
  SegmentMode mode = SegmentMode::Fixed;
  double window_ms = 75.0;
  double overlap_ms = 30.0;
  std::size_t segment_count = 87;

  double hop_ms() const { return window_ms - overlap_ms; }
  /// Shortest stream fixed mode accepts: window + (count - 1) * hop.
  double min_duration_ms() const;
  void validate() const;
};

/// [start_s, end_s) of every window for a stream of the given duration.
std::vector<std::pair<double, double>> segment_windows(const SegmentationSpec& spec, double duration_s);

/// Mean-pooled frames per window, [87, F]. DataError for streams shorter than
/// the minimum duration or windows that contain no frame.
Tensor<double> fixed_segments(const AudioFeatureStream& stream, const SegmentationSpec& spec = {});
/// DataError for fewer frames than segments or empty windows.
Tensor<double> variable_segments(const AudioFeatureStream& stream, const SegmentationSpec& spec = {});

Tensor<double> segment(const AudioFeatureStream& stream, const SegmentationSpec& spec);

}  // namespace stnet
