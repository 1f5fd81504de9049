#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "stnet/tensor.hpp"

namespace stnet {

enum class Split { Train, Val, Test };

std::string_view split_name(Split s);
/// "train", "val", "test"; UsageError otherwise.
Split parse_split(std::string_view name);

/// One line of manifest.jsonl:
///   {"duration_s":4.2,"id":"a0001","label":1,"path":"audio/a0001.csv","split":"train"}
/// label: 0 = sober, 1 = intoxicated. path is relative to the manifest.
struct ManifestRecord {
  std::string id;
  std::string path;
  int label = 0;
  Split split = Split::Train;
  double duration_s = 0.0;
};

inline constexpr const char* kManifestName = "manifest.jsonl";

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);
/// Checks unique ids, labels in {0,1}, known splits and (optionally) that
/// every path resolves relative to the manifest directory. DataError on
/// violations, FormatError on malformed lines.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path, bool check_paths = true);

/// Frame-level audio features: CSV with header "t_sec,<f1>,...,<fF>" and
/// strictly increasing times.
struct AudioFeatureStream {
  std::vector<std::string> columns;  // feature names, without t_sec
  std::vector<double> times;         // seconds
  Tensor<double> frames;             // [rows, F]
  double duration_s = 0.0;

  std::size_t feature_count() const { return columns.size(); }
  std::size_t rows() const { return times.size(); }
};

/// `duration_s` <= 0 estimates the duration as last time + last frame hop.
AudioFeatureStream read_audio_csv(const std::filesystem::path& path, double duration_s = 0.0);
AudioFeatureStream parse_audio_csv(std::string_view text, double duration_s = 0.0);
void write_audio_csv(const std::filesystem::path& path, const AudioFeatureStream& stream);
/// Validates times and frame shape; DataError on violations.
void validate_stream(const AudioFeatureStream& stream);

/// Stream-level pooling for the audio DNN: per-feature mean followed by
/// per-feature population standard deviation, [2F].
Tensor<double> pooled_stats(const AudioFeatureStream& stream);

/// How a manifest entry becomes a model input.
enum class InputPipeline {
  Video,          // container entry "video" [C, L, H, W]
  AudioPooled,    // CSV -> pooled_stats [2F]
  AudioFixed,     // CSV -> fixed_segments [87, F]
  AudioVariable,  // CSV -> variable_segments [87, F]
  FrameFeatures,  // container entry "features" [T, D]
};

InputPipeline pipeline_for_arch(std::string_view arch);

template <typename T>
struct Sample {
  std::string id;
  Tensor<T> input;  // one sample, no batch axis
  int label = 0;
};

template <typename T>
using SampleSet = std::vector<Sample<T>>;

/// Loads every record of `split` from `data_dir/manifest.jsonl`.
template <typename T>
SampleSet<T> load_split(const std::filesystem::path& data_dir, Split split, InputPipeline pipeline);

}  // namespace stnet
