#include "stnet/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"
#include "stnet/container.hpp"
#include "stnet/errors.hpp"
#include "stnet/models.hpp"
#include "stnet/segmentation.hpp"

namespace stnet {

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  for (auto s : {Split::Train, Split::Val, Split::Test})
    if (split_name(s) == name) return s;
  throw UsageError("unknown split '" + std::string(name) + "' (expected train, val or test)");
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  for (const auto& r : records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["path"] = r.path;
    j["label"] = r.label;
    j["split"] = std::string(split_name(r.split));
    j["duration_s"] = r.duration_s;
    f << j.dump() << '\n';
  }
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path, bool check_paths) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest '" + path.string() + "'");
  std::vector<ManifestRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    ManifestRecord r;
    try {
      const auto j = nlohmann::json::parse(line);
      r.id = j.at("id").get<std::string>();
      r.path = j.at("path").get<std::string>();
      r.label = j.at("label").get<int>();
      r.split = parse_split(j.at("split").get<std::string>());
      r.duration_s = j.at("duration_s").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": " + e.what());
    } catch (const UsageError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (r.label != 0 && r.label != 1) throw DataError(where + ": label must be 0 or 1");
    if (!ids.insert(r.id).second) throw DataError(where + ": duplicate id '" + r.id + "'");
    if (check_paths && !std::filesystem::exists(path.parent_path() / r.path))
      throw DataError(where + ": path '" + r.path + "' does not exist");
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

void validate_stream(const AudioFeatureStream& s) {
  const std::size_t F = s.feature_count();
  if (F == 0) throw DataError("audio stream has no feature columns");
  if (s.times.empty()) throw DataError("audio stream has no frames");
  if (s.frames.shape() != Shape{s.times.size(), F}) throw DataError("audio frames do not match times x features");
  for (std::size_t i = 1; i < s.times.size(); ++i)
    if (!(s.times[i] > s.times[i - 1]))
      throw DataError("audio times must be strictly increasing (row " + std::to_string(i + 1) + ")");
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view field, std::size_t row) {
  while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.remove_suffix(1);
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v))
    throw DataError("audio CSV row " + std::to_string(row) + ": bad number '" + std::string(field) + "'");
  return v;
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

AudioFeatureStream parse_audio_csv(std::string_view text, double duration_s) {
  AudioFeatureStream s;
  std::vector<double> values;
  std::size_t row = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    ++row;
    const auto fields = split_csv(line);
    if (row == 1) {
      if (fields.empty() || fields[0] != "t_sec") throw DataError("audio CSV header must start with t_sec");
      for (std::size_t i = 1; i < fields.size(); ++i) s.columns.emplace_back(fields[i]);
      continue;
    }
    if (fields.size() != s.columns.size() + 1)
      throw DataError("audio CSV row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(s.columns.size() + 1));
    s.times.push_back(parse_double(fields[0], row));
    for (std::size_t i = 1; i < fields.size(); ++i) values.push_back(parse_double(fields[i], row));
  }
  if (row == 0) throw DataError("audio CSV is empty");
  if (s.times.empty()) throw DataError("audio CSV has no frames");
  s.frames = Tensor<double>({s.times.size(), s.columns.size()}, std::move(values));
  if (duration_s > 0.0) {
    s.duration_s = duration_s;
  } else {
    const double hop = s.times.size() > 1 ? s.times.back() - s.times[s.times.size() - 2] : 0.0;
    s.duration_s = s.times.back() + hop;
  }
  validate_stream(s);
  return s;
}

AudioFeatureStream read_audio_csv(const std::filesystem::path& path, double duration_s) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return parse_audio_csv(text, duration_s);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_audio_csv(const std::filesystem::path& path, const AudioFeatureStream& s) {
  validate_stream(s);
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f << "t_sec";
  for (const auto& c : s.columns) f << ',' << c;
  f << '\n';
  const std::size_t F = s.feature_count();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    f << format_double(s.times[r]);
    for (std::size_t c = 0; c < F; ++c) f << ',' << format_double(s.frames[r * F + c]);
    f << '\n';
  }
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

Tensor<double> pooled_stats(const AudioFeatureStream& s) {
  validate_stream(s);
  const std::size_t F = s.feature_count(), R = s.rows();
  Tensor<double> out({2 * F});
  for (std::size_t f = 0; f < F; ++f) {
    double mean = 0.0;
    for (std::size_t r = 0; r < R; ++r) mean += s.frames[r * F + f];
    mean /= static_cast<double>(R);
    double var = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      const double d = s.frames[r * F + f] - mean;
      var += d * d;
    }
    out[f] = mean;
    out[F + f] = std::sqrt(var / static_cast<double>(R));
  }
  return out;
}

InputPipeline pipeline_for_arch(std::string_view arch) {
  if (is_video_arch(arch)) return InputPipeline::Video;
  if (arch == "audio-dnn-512" || arch == "audio-dnn-256") return InputPipeline::AudioPooled;
  if (arch == "audio-lstm-fixed") return InputPipeline::AudioFixed;
  if (arch == "audio-lstm-variable") return InputPipeline::AudioVariable;
  if (arch == "feat-lstm") return InputPipeline::FrameFeatures;
  throw UsageError("unknown architecture '" + std::string(arch) + "'");
}

template <typename T>
SampleSet<T> load_split(const std::filesystem::path& data_dir, Split split, InputPipeline pipeline) {
  const auto records = read_manifest(data_dir / kManifestName);
  SampleSet<T> out;
  for (const auto& r : records) {
    if (r.split != split) continue;
    const auto path = data_dir / r.path;
    Sample<T> s{r.id, Tensor<T>(), r.label};
    switch (pipeline) {
      case InputPipeline::Video:
        s.input = container_tensor<T>(read_container(path), "video");
        if (s.input.rank() != 4) throw DataError(r.id + ": video entry must be [C,L,H,W]");
        break;
      case InputPipeline::FrameFeatures:
        s.input = container_tensor<T>(read_container(path), "features");
        if (s.input.rank() != 2) throw DataError(r.id + ": features entry must be [T,D]");
        break;
      case InputPipeline::AudioPooled:
        s.input = pooled_stats(read_audio_csv(path, r.duration_s)).cast<T>();
        break;
      case InputPipeline::AudioFixed:
      case InputPipeline::AudioVariable: {
        SegmentationSpec spec;
        spec.mode = pipeline == InputPipeline::AudioFixed ? SegmentMode::Fixed : SegmentMode::Variable;
        try {
          s.input = segment(read_audio_csv(path, r.duration_s), spec).cast<T>();
        } catch (const DataError& e) {
          throw DataError(r.id + ": " + e.what());
        }
        break;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

template SampleSet<float> load_split(const std::filesystem::path&, Split, InputPipeline);
template SampleSet<double> load_split(const std::filesystem::path&, Split, InputPipeline);

}  // namespace stnet
