#include "stnet/ensemble.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "stnet/errors.hpp"

namespace stnet {

void PredictionSet::validate() const {
  if (ids.size() != probs.size()) throw DataError(model_id + ": id and probability counts differ");
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0))
      throw DataError(model_id + ": probability for '" + ids[i] + "' is outside [0, 1]");
}

std::vector<double> normalize_weights(std::span<const double> weights) {
  if (weights.empty()) throw UsageError("at least one weight is required");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw UsageError("weights must be finite and nonnegative");
    sum += w;
  }
  if (sum == 0.0) throw ArithmeticError("weights sum to zero");
  std::vector<double> out(weights.begin(), weights.end());
  for (auto& w : out) w /= sum;
  return out;
}

std::vector<double> derive_weights(EnsembleStrategy strategy, std::span<const double> val_accuracies) {
  if (val_accuracies.empty()) throw UsageError("at least one model is required");
  const std::size_t m = val_accuracies.size();
  if (strategy == EnsembleStrategy::Average) return std::vector<double>(m, 1.0 / static_cast<double>(m));
  double sum = 0.0;
  for (double a : val_accuracies) {
    if (!std::isfinite(a) || a < 0.0 || a > 1.0) throw RangeError("validation accuracies must lie in (0, 1]");
    sum += a;
  }
  if (sum == 0.0) throw ArithmeticError("validation accuracies sum to zero");
  for (double a : val_accuracies)
    if (a == 0.0) throw RangeError("validation accuracies must lie in (0, 1]");
  std::vector<double> w(m);
  for (std::size_t i = 0; i < m; ++i) w[i] = val_accuracies[i] / sum;
  return w;
}

PredictionSet fuse(std::span<const PredictionSet> predictions, const EnsembleSpec& spec) {
  if (predictions.empty()) throw UsageError("fuse needs at least one prediction set");
  if (spec.weights.size() != predictions.size())
    throw UsageError("got " + std::to_string(spec.weights.size()) + " weights for " +
                     std::to_string(predictions.size()) + " prediction sets");
  for (double w : spec.weights)
    if (!(w >= 0.0)) throw UsageError("weights must be nonnegative");
  const double wsum = std::accumulate(spec.weights.begin(), spec.weights.end(), 0.0);
  if (std::abs(wsum - 1.0) > 1e-9) throw UsageError("weights must sum to 1");

  const PredictionSet& first = predictions.front();
  for (const auto& p : predictions) p.validate();

  // Each id maps to its row positions; duplicates are consumed in order.
  PredictionSet out;
  out.model_id = "ensemble";
  out.ids = first.ids;
  out.probs.assign(first.ids.size(), 0.0);
  for (std::size_t m = 0; m < predictions.size(); ++m) {
    const auto& p = predictions[m];
    if (p.ids.size() != first.ids.size())
      throw DataError("'" + p.model_id + "' covers " + std::to_string(p.ids.size()) + " samples, '" +
                      first.model_id + "' covers " + std::to_string(first.ids.size()));
    std::map<std::string_view, std::vector<std::size_t>> rows;
    for (std::size_t i = p.ids.size(); i-- > 0;) rows[p.ids[i]].push_back(i);
    for (std::size_t i = 0; i < first.ids.size(); ++i) {
      auto it = rows.find(first.ids[i]);
      if (it == rows.end() || it->second.empty())
        throw DataError("sample '" + first.ids[i] + "' missing from '" + p.model_id + "'");
      out.probs[i] += spec.weights[m] * p.probs[it->second.back()];
      it->second.pop_back();
    }
  }
  for (auto& v : out.probs) v = std::clamp(v, 0.0, 1.0);
  return out;
}

void write_predictions(const std::filesystem::path& path, const PredictionSet& preds) {
  preds.validate();
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f << "sample_id,p_intoxicated\n";
  char buf[40];
  for (std::size_t i = 0; i < preds.ids.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", preds.probs[i]);
    f << preds.ids[i] << ',' << buf << '\n';
  }
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

PredictionSet read_predictions(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  PredictionSet out;
  out.model_id = path.stem().string();
  std::string line;
  std::size_t row = 0;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    if (row == 1) {
      if (line != "sample_id,p_intoxicated")
        throw FormatError(path.string() + ": header must be 'sample_id,p_intoxicated'");
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw FormatError(path.string() + ":" + std::to_string(row) + ": expected two fields");
    double p = 0.0;
    const char* begin = line.data() + comma + 1;
    const char* end = line.data() + line.size();
    const auto [ptr, ec] = std::from_chars(begin, end, p);
    if (ec != std::errc{} || ptr != end)
      throw FormatError(path.string() + ":" + std::to_string(row) + ": bad probability");
    out.ids.push_back(line.substr(0, comma));
    out.probs.push_back(p);
  }
  if (row == 0) throw FormatError(path.string() + ": empty prediction file");
  try {
    out.validate();
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace stnet
