#include "stnet/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stnet/errors.hpp"

namespace stnet {

double SegmentationSpec::min_duration_ms() const {
  return window_ms + static_cast<double>(segment_count - 1) * hop_ms();
}

void SegmentationSpec::validate() const {
  if (segment_count == 0) throw RangeError("segmentation: segment count must be >= 1");
  if (mode == SegmentMode::Fixed && !(window_ms > overlap_ms && overlap_ms >= 0.0))
    throw RangeError("segmentation: window must be longer than the overlap");
}

std::vector<std::pair<double, double>> segment_windows(const SegmentationSpec& spec, double duration_s) {
  spec.validate();
  std::vector<std::pair<double, double>> w;
  w.reserve(spec.segment_count);
  for (std::size_t k = 0; k < spec.segment_count; ++k) {
    const auto kd = static_cast<double>(k);
    if (spec.mode == SegmentMode::Fixed) {
      // Integral millisecond bounds divide exactly once, so they compare equal
      // to the same times written as decimal seconds.
      w.emplace_back((kd * spec.hop_ms()) / 1000.0, (kd * spec.hop_ms() + spec.window_ms) / 1000.0);
    } else {
      const auto n = static_cast<double>(spec.segment_count);
      w.emplace_back(duration_s * kd / n, duration_s * (kd + 1.0) / n);
    }
  }
  return w;
}

namespace {

Tensor<double> pool_windows(const AudioFeatureStream& s, const std::vector<std::vector<std::size_t>>& members) {
  const std::size_t F = s.feature_count();
  Tensor<double> out({members.size(), F});
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (members[k].empty()) {
      std::ostringstream os;
      os << "segment " << k << " contains no frames";
      throw DataError(os.str());
    }
    for (auto r : members[k])
      for (std::size_t f = 0; f < F; ++f) out[k * F + f] += s.frames[r * F + f];
    for (std::size_t f = 0; f < F; ++f) out[k * F + f] /= static_cast<double>(members[k].size());
  }
  return out;
}

}  // namespace

Tensor<double> fixed_segments(const AudioFeatureStream& stream, const SegmentationSpec& spec) {
  validate_stream(stream);
  spec.validate();
  const double min_s = spec.min_duration_ms() / 1000.0;
  if (stream.duration_s < min_s) {
    std::ostringstream os;
    os << "stream lasts " << stream.duration_s * 1000.0 << " ms; fixed segmentation needs at least "
       << spec.min_duration_ms() << " ms";
    throw DataError(os.str());
  }
  const auto windows = segment_windows(spec, stream.duration_s);
  std::vector<std::vector<std::size_t>> members(windows.size());
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const auto [lo, hi] = windows[k];
    auto first = std::lower_bound(stream.times.begin(), stream.times.end(), lo);
    for (auto it = first; it != stream.times.end() && *it < hi; ++it)
      members[k].push_back(static_cast<std::size_t>(it - stream.times.begin()));
  }
  return pool_windows(stream, members);
}

Tensor<double> variable_segments(const AudioFeatureStream& stream, const SegmentationSpec& spec) {
  validate_stream(stream);
  spec.validate();
  if (!(stream.duration_s > 0.0)) throw DataError("variable segmentation needs a positive duration");
  if (stream.rows() < spec.segment_count)
    throw DataError("variable segmentation needs at least " + std::to_string(spec.segment_count) + " frames, got " +
                    std::to_string(stream.rows()));
  const auto n = static_cast<double>(spec.segment_count);
  std::vector<std::vector<std::size_t>> members(spec.segment_count);
  for (std::size_t r = 0; r < stream.rows(); ++r) {
    const double pos = std::floor(stream.times[r] * n / stream.duration_s);
    const auto k = static_cast<std::size_t>(std::clamp(pos, 0.0, n - 1.0));
    members[k].push_back(r);
  }
  return pool_windows(stream, members);
}

Tensor<double> segment(const AudioFeatureStream& stream, const SegmentationSpec& spec) {
  return spec.mode == SegmentMode::Fixed ? fixed_segments(stream, spec) : variable_segments(stream, spec);
}

}  // namespace stnet
