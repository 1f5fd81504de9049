#include "stnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "stnet/container.hpp"
#include "stnet/errors.hpp"
#include "stnet/segmentation.hpp"

namespace stnet {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kFrameRate = 100.0;

std::string make_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
  return buf;
}

// Reflects a coordinate into [0, extent - 1].
double reflect(double x, double extent) {
  const double hi = extent - 1.0;
  if (hi <= 0.0) return 0.0;
  const double period = 2.0 * hi;
  double m = std::fmod(x, period);
  if (m < 0) m += period;
  return m <= hi ? m : period - m;
}

}  // namespace

std::vector<ManifestRecord> plan_split_labels(Rng& rng, const SplitCounts& counts, double imbalance,
                                              const char* id_prefix) {
  if (counts.train == 0 || counts.val == 0 || counts.test == 0) throw RangeError("every split needs >= 1 sample");
  if (!(imbalance > 0.0)) throw RangeError("imbalance ratio must be positive");
  std::vector<ManifestRecord> out;
  std::size_t next_id = 0;
  auto emit = [&](Split split, std::size_t n, double ratio) {
    const auto positives = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio / (1.0 + ratio)));
    std::vector<int> labels(n, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(std::min(positives, n)), 1);
    rng.shuffle(std::span<int>(labels));
    for (int label : labels) {
      ManifestRecord r;
      r.id = make_id(id_prefix, next_id++);
      r.label = label;
      r.split = split;
      out.push_back(std::move(r));
    }
  };
  emit(Split::Train, counts.train, imbalance);
  emit(Split::Val, counts.val, 1.0);
  emit(Split::Test, counts.test, 1.0);
  return out;
}

Tensor<float> synth_video(Rng& rng, int label, const Extent3& shape) {
  const std::size_t L = shape.l, H = shape.h, W = shape.w;
  if (L == 0 || H == 0 || W == 0) throw ShapeError("synthetic video extents must be >= 1");
  const bool fast = label == 1;
  const double scale = static_cast<double>(std::min(H, W)) / 64.0;
  const double speed = (fast ? 3.0 : 0.75) * scale * rng.uniform(0.85, 1.15);
  const double flicker = (fast ? 0.25 : 0.0625) * rng.uniform(0.9, 1.1);  // cycles per frame
  const double phase = rng.uniform(0.0, kTwoPi);
  const double heading = rng.uniform(0.0, kTwoPi);
  const double sigma = std::max(1.0, static_cast<double>(std::min(H, W)) / 10.0);
  const double y0 = rng.uniform(0.0, static_cast<double>(H));
  const double x0 = rng.uniform(0.0, static_cast<double>(W));
  double colour[3];
  for (auto& c : colour) c = rng.uniform(0.5, 1.0);

  Tensor<float> v({3, L, H, W});
  const std::size_t plane = H * W, frame_vol = L * plane;
  std::vector<double> frame(3 * plane);
  for (std::size_t t = 0; t < L; ++t) {
    const auto td = static_cast<double>(t);
    const double cy = reflect(y0 + speed * td * std::sin(heading), static_cast<double>(H));
    const double cx = reflect(x0 + speed * td * std::cos(heading), static_cast<double>(W));
    const double amp = 1.0 + 0.6 * std::sin(kTwoPi * flicker * td + phase);
    double mean = 0.0;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
          const double blob = amp * colour[c] * std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
          const double val = blob + 0.15 * rng.normal();
          frame[c * plane + y * W + x] = val;
          mean += val;
        }
    mean /= static_cast<double>(3 * plane);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i)
        v[c * frame_vol + t * plane + i] = static_cast<float>(frame[c * plane + i] - mean);
  }
  return v;
}

std::vector<ManifestRecord> gen_synthetic_videos(const std::filesystem::path& dir, const SyntheticVideoConfig& cfg) {
  Rng rng(cfg.seed);
  auto records = plan_split_labels(rng, cfg.counts, cfg.imbalance, "s");
  std::filesystem::create_directories(dir / "videos");
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    Rng sample_rng = rng.fork(i);
    const Tensor<float> video = synth_video(sample_rng, r.label, cfg.shape);
    r.path = "videos/" + r.id + ".stc";
    r.duration_s = static_cast<double>(cfg.shape.l) / 25.0;
    const ContainerEntry entry{"video", video};
    write_container(dir / r.path, std::span<const ContainerEntry>(&entry, 1));
  }
  write_manifest(dir / kManifestName, records);
  return records;
}

AudioFeatureStream synth_audio(Rng& rng, int label, std::size_t features, double min_duration_s,
                               double max_duration_s) {
  if (features == 0) throw RangeError("synthetic audio needs at least one feature");
  if (!(min_duration_s <= max_duration_s) || min_duration_s <= 0.0) throw RangeError("bad duration range");
  const bool fast = label == 1;
  const double duration = min_duration_s == max_duration_s ? min_duration_s : rng.uniform(min_duration_s, max_duration_s);
  const auto rows = static_cast<std::size_t>(std::ceil(duration * kFrameRate - 1e-9));

  AudioFeatureStream s;
  for (std::size_t f = 0; f < features; ++f) s.columns.push_back("f" + std::to_string(f));
  s.times.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) s.times[r] = static_cast<double>(r) / kFrameRate;
  s.duration_s = static_cast<double>(rows) / kFrameRate;
  s.frames = Tensor<double>({rows, features});

  const double freq = (fast ? 3.0 : 1.0) * rng.uniform(0.9, 1.1);  // Hz
  const double amp = (fast ? 1.5 : 1.0) * rng.uniform(0.9, 1.1);
  for (std::size_t f = 0; f < features; ++f) {
    const double phase = rng.uniform(0.0, kTwoPi);
    const double offset = 0.3 * rng.normal();
    const double gain = rng.uniform(0.8, 1.2);
    for (std::size_t r = 0; r < rows; ++r)
      s.frames[r * features + f] =
          offset + gain * amp * std::sin(kTwoPi * freq * s.times[r] + phase) + 0.2 * rng.normal();
  }
  return s;
}

std::vector<ManifestRecord> gen_synthetic_audio(const std::filesystem::path& dir, const SyntheticAudioConfig& cfg) {
  if (cfg.min_duration_s * 1000.0 < SegmentationSpec{}.min_duration_ms())
    throw RangeError("synthetic audio must last at least " + std::to_string(SegmentationSpec{}.min_duration_ms()) +
                     " ms so fixed segmentation applies");
  Rng rng(cfg.seed);
  auto records = plan_split_labels(rng, cfg.counts, cfg.imbalance, "s");
  std::filesystem::create_directories(dir / "audio");
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    Rng sample_rng = rng.fork(i);
    const auto stream = synth_audio(sample_rng, r.label, cfg.features, cfg.min_duration_s, cfg.max_duration_s);
    r.path = "audio/" + r.id + ".csv";
    r.duration_s = stream.duration_s;
    write_audio_csv(dir / r.path, stream);
  }
  write_manifest(dir / kManifestName, records);
  return records;
}

}  // namespace stnet
