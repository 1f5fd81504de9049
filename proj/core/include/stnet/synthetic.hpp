#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "stnet/dataset.hpp"
#include "stnet/layers.hpp"
#include "stnet/rng.hpp"

namespace stnet {

struct SplitCounts {
  std::size_t train = 200;
  std::size_t val = 60;
  std::size_t test = 60;
};

/// Labels for the three splits, deterministic per seed. Train labels follow
/// `imbalance` = intoxicated : sober; val and test are balanced.
std::vector<ManifestRecord> plan_split_labels(Rng& rng, const SplitCounts& counts, double imbalance,
                                              const char* id_prefix);

/// Class 0 (sober): a Gaussian blob drifting slowly with low-frequency
/// flicker. Class 1 (intoxicated): fast drift and high-frequency flicker.
/// Additive noise, and every frame is shifted to zero mean so that no single
/// frame's intensity reveals the class. Returns [3, L, H, W].
Tensor<float> synth_video(Rng& rng, int label, const Extent3& shape);

struct SyntheticVideoConfig {
  SplitCounts counts;
  Extent3 shape{16, 64, 64};
  double imbalance = 1.0;
  std::uint64_t seed = 0;
};

/// Writes DIR/manifest.jsonl and DIR/videos/<id>.stc (entry "video").
std::vector<ManifestRecord> gen_synthetic_videos(const std::filesystem::path& dir, const SyntheticVideoConfig& cfg);

/// Frame-level features at 100 frames/s. Every feature oscillates; class 1
/// oscillates faster and with larger amplitude. Duration is drawn from
/// [min_duration_s, max_duration_s] and floored to whole frames.
AudioFeatureStream synth_audio(Rng& rng, int label, std::size_t features, double min_duration_s,
                               double max_duration_s);

struct SyntheticAudioConfig {
  SplitCounts counts;
  std::size_t features = 16;
  double min_duration_s = 4.0;
  double max_duration_s = 6.0;
  double imbalance = 1.0;
  std::uint64_t seed = 0;
};

/// Writes DIR/manifest.jsonl and DIR/audio/<id>.csv.
std::vector<ManifestRecord> gen_synthetic_audio(const std::filesystem::path& dir, const SyntheticAudioConfig& cfg);

}  // namespace stnet
