#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stnet/dataset.hpp"
#include "stnet/models.hpp"

namespace stnet {

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;  // dL/dlogits
};

/// Mean over the batch of -log softmax(logits)[label], with max-subtraction.
/// Labels must be 0 or 1 (DataError otherwise).
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over every slot that has a gradient.
template <typename T>
class Adam {
 public:
  Adam(Slots<T> slots, AdamConfig config = {});

  /// Throws TrainingError (naming the parameter) if any gradient is NaN or
  /// infinite; parameters are left untouched in that case.
  void step();
  std::size_t steps() const { return step_; }
  AdamConfig& config() { return config_; }

 private:
  Slots<T> params_;
  std::vector<Tensor<T>> m_, v_;
  AdamConfig config_;
  std::size_t step_ = 0;
};

struct Metrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing is predicted positive
  double recall = 0.0;     // 0 when there are no positives

  static Metrics from_confusion(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);
};

/// Positive prediction iff p > 0.5.
Metrics compute_metrics(std::span<const double> p_positive, std::span<const int> labels);

template <typename T>
struct EvalResult {
  Metrics metrics;
  std::vector<double> p_positive;
};

/// Eval-mode inference; UsageError on an empty set.
template <typename T>
EvalResult<T> evaluate(Model<T>& model, const SampleSet<T>& samples, std::size_t batch_size = 8);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 2;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> checkpoint;
  /// Learning rate per epoch (1-based); overrides `lr` when set.
  std::function<double(std::size_t)> lr_schedule;
  std::function<void(const EpochRecord&)> on_epoch;
  /// Prepend an epoch-0 record measured in eval mode before any update.
  bool record_initial = false;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_acc = -1.0;
  /// Non-empty when training stopped early (checkpoint I/O failure); the
  /// history then covers the completed epochs.
  std::string error;
};

/// Batches of `batch_size` drawn from a per-epoch seeded shuffle. A trailing
/// batch of one sample joins the previous batch (batch norm needs >= 2).
std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order, std::size_t batch_size);

/// Trains, validates after every epoch in eval mode and writes a checkpoint
/// whenever validation accuracy strictly improves (ties keep the earlier one).
template <typename T>
TrainResult train_loop(Model<T>& model, const SampleSet<T>& train, const SampleSet<T>& val, const TrainConfig& config);

/// Eval-mode loss and accuracy on `train` plus validation accuracy, as an
/// epoch-0 record.
template <typename T>
EpochRecord initial_record(Model<T>& model, const SampleSet<T>& train, const SampleSet<T>& val);

/// CSV with header "epoch,train_loss,train_acc,val_acc".
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);
std::string history_csv(const std::vector<EpochRecord>& history);

template <typename T>
Tensor<T> batch_inputs(const SampleSet<T>& samples, std::span<const std::size_t> indices);

}  // namespace stnet
