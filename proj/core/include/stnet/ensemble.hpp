#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stnet {

/// Probability of the intoxicated class per sample, from one model.
struct PredictionSet {
  std::string model_id;
  std::vector<std::string> ids;
  std::vector<double> probs;

  void validate() const;
};

enum class EnsembleStrategy { Average, ValidationAccuracy };

struct EnsembleSpec {
  EnsembleStrategy strategy = EnsembleStrategy::Average;
  std::vector<double> weights;  // nonnegative, sum 1
};

/// Average: 1/m each. ValidationAccuracy: acc_i / sum(acc). Accuracies must
/// lie in (0, 1]; a zero sum raises ArithmeticError.
std::vector<double> derive_weights(EnsembleStrategy strategy, std::span<const double> val_accuracies);

/// Normalizes nonnegative weights to sum 1.
std::vector<double> normalize_weights(std::span<const double> weights);

/// p = sum_i w_i p_i per sample, in the order of the first set. The other
/// sets may list the same ids in any order.
PredictionSet fuse(std::span<const PredictionSet> predictions, const EnsembleSpec& spec);

/// Intoxicated iff p > 0.5; an exact 0.5 is sober.
inline bool is_intoxicated(double p) { return p > 0.5; }

/// CSV with header "sample_id,p_intoxicated"; probabilities are written with
/// 17 significant digits so they read back exactly.
void write_predictions(const std::filesystem::path& path, const PredictionSet& preds);
PredictionSet read_predictions(const std::filesystem::path& path);

}  // namespace stnet
