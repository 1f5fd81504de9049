#include "stnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "stnet/checkpoint.hpp"
#include "stnet/errors.hpp"

namespace stnet {

template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [N,K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw ShapeError("cross_entropy: label count does not match batch");
  LossResult<T> r{0.0, Tensor<T>(logits.shape())};
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw DataError("cross_entropy: invalid label " + std::to_string(labels[i]));
    const T* z = logits.ptr() + i * k;
    const double m = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(z[j] - m);
    const double log_denom = std::log(denom);
    r.loss += -(z[labels[i]] - m - log_denom);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(z[j] - m - log_denom);
      r.grad[i * k + j] = static_cast<T>((p - (static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0)) /
                                         static_cast<double>(n));
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

template <typename T>
Adam<T>::Adam(Slots<T> slots, AdamConfig config) : config_(config) {
  for (auto& s : slots) {
    if (!s.grad) continue;
    m_.emplace_back(s.value->shape());
    v_.emplace_back(s.value->shape());
    params_.push_back(s);
  }
}

template <typename T>
void Adam<T>::step() {
  for (const auto& p : params_)
    for (T g : p.grad->data())
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in '" + p.name + "'; training aborted");
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    T* w = params_[i].value->ptr();
    const T* g = params_[i].grad->ptr();
    T* m = m_[i].ptr();
    T* v = v_[i].ptr();
    for (std::size_t j = 0, n = m_[i].size(); j < n; ++j) {
      m[j] = static_cast<T>(b1 * m[j] + (1.0 - b1) * g[j]);
      v[j] = static_cast<T>(b2 * v[j] + (1.0 - b2) * static_cast<double>(g[j]) * g[j]);
      const double mhat = m[j] / c1, vhat = v[j] / c2;
      w[j] = static_cast<T>(w[j] - config_.lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

Metrics Metrics::from_confusion(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  Metrics m{tp, fp, tn, fn};
  const std::size_t total = tp + fp + tn + fn;
  m.accuracy = total ? static_cast<double>(tp + tn) / static_cast<double>(total) : 0.0;
  m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return m;
}

Metrics compute_metrics(std::span<const double> p_positive, std::span<const int> labels) {
  if (p_positive.size() != labels.size()) throw ShapeError("metrics: prediction/label count mismatch");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = p_positive[i] > 0.5;
    const bool pos = labels[i] == static_cast<int>(kPositiveClass);
    (pred ? (pos ? tp : fp) : (pos ? fn : tn))++;
  }
  return Metrics::from_confusion(tp, fp, tn, fn);
}

template <typename T>
Tensor<T> batch_inputs(const SampleSet<T>& samples, std::span<const std::size_t> indices) {
  std::vector<Tensor<T>> items;
  items.reserve(indices.size());
  for (auto i : indices) items.push_back(samples.at(i).input);
  return stack<T>(items);
}

template <typename T>
EvalResult<T> evaluate(Model<T>& model, const SampleSet<T>& samples, std::size_t batch_size) {
  if (samples.empty()) throw UsageError("evaluate: empty split");
  batch_size = std::max<std::size_t>(1, batch_size);
  EvalResult<T> r;
  std::vector<int> labels;
  for (std::size_t b = 0; b < samples.size(); b += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, samples.size() - b));
    std::iota(idx.begin(), idx.end(), b);
    const Tensor<T> probs = softmax(model.forward(batch_inputs(samples, idx), Mode::Eval));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      r.p_positive.push_back(static_cast<double>(probs[i * probs.dim(1) + kPositiveClass]));
      labels.push_back(samples[idx[i]].label);
    }
  }
  r.metrics = compute_metrics(r.p_positive, labels);
  return r;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order, std::size_t batch_size) {
  if (batch_size == 0) throw UsageError("batch size must be >= 1");
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < order.size(); b += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + batch_size)));
  if (batch_size > 1 && batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

template <typename T>
EpochRecord initial_record(Model<T>& model, const SampleSet<T>& train, const SampleSet<T>& val) {
  EpochRecord rec;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  constexpr std::size_t kBatch = 8;
  for (std::size_t b = 0; b < train.size(); b += kBatch) {
    std::vector<std::size_t> idx(std::min(kBatch, train.size() - b));
    std::iota(idx.begin(), idx.end(), b);
    std::vector<int> labels;
    for (auto i : idx) labels.push_back(train[i].label);
    const Tensor<T> logits = model.forward(batch_inputs(train, idx), Mode::Eval);
    loss_sum += cross_entropy(logits, labels).loss * static_cast<double>(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      correct += (logits[i * 2 + 1] > logits[i * 2] ? 1 : 0) == labels[i];
  }
  rec.train_loss = loss_sum / static_cast<double>(train.size());
  rec.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
  rec.val_acc = evaluate(model, val).metrics.accuracy;
  return rec;
}

template <typename T>
TrainResult train_loop(Model<T>& model, const SampleSet<T>& train, const SampleSet<T>& val, const TrainConfig& config) {
  if (train.empty() || val.empty()) throw UsageError("train_loop: train and validation splits must be nonempty");
  if (config.epochs == 0) throw UsageError("train_loop: epochs must be >= 1");
  TrainResult result;
  Adam<T> opt(model.slots(), AdamConfig{config.lr});
  Rng shuffle_rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  if (config.record_initial) {
    result.history.push_back(initial_record(model, train, val));
    if (config.on_epoch) config.on_epoch(result.history.back());
  }

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    opt.config().lr = config.lr_schedule ? config.lr_schedule(epoch) : config.lr;
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& batch : make_batches(order, config.batch_size)) {
      std::vector<int> labels;
      for (auto i : batch) labels.push_back(train[i].label);
      model.zero_grad();
      const Tensor<T> logits = model.forward(batch_inputs(train, batch), Mode::Train);
      const auto loss = cross_entropy(logits, labels);
      if (!std::isfinite(loss.loss)) throw TrainingError("loss became non-finite in epoch " + std::to_string(epoch));
      model.backward(loss.grad);
      opt.step();
      loss_sum += loss.loss * static_cast<double>(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t predicted = logits[i * 2 + 1] > logits[i * 2] ? 1 : 0;
        correct += predicted == static_cast<std::size_t>(labels[i]);
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    rec.val_acc = evaluate(model, val).metrics.accuracy;
    result.history.push_back(rec);
    if (config.on_epoch) config.on_epoch(rec);

    if (rec.val_acc > result.best_val_acc) {
      result.best_val_acc = rec.val_acc;
      result.best_epoch = epoch;
      if (config.checkpoint) {
        try {
          save_checkpoint(*config.checkpoint, model, CheckpointMeta{epoch, rec.val_acc});
        } catch (const Error& e) {
          result.error = std::string("checkpoint write failed: ") + e.what();
          return result;
        }
      }
    }
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,train_acc,val_acc\n";
  for (const auto& r : history) os << r.epoch << ',' << r.train_loss << ',' << r.train_acc << ',' << r.val_acc << '\n';
  return os.str();
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f << history_csv(history);
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

#define STNET_INSTANTIATE(T)                                                                      \
  template LossResult<T> cross_entropy(const Tensor<T>&, std::span<const int>);                   \
  template class Adam<T>;                                                                         \
  template Tensor<T> batch_inputs(const SampleSet<T>&, std::span<const std::size_t>);             \
  template EvalResult<T> evaluate(Model<T>&, const SampleSet<T>&, std::size_t);                   \
  template TrainResult train_loop(Model<T>&, const SampleSet<T>&, const SampleSet<T>&, const TrainConfig&); \
  template EpochRecord initial_record(Model<T>&, const SampleSet<T>&, const SampleSet<T>&);

STNET_INSTANTIATE(float)
STNET_INSTANTIATE(double)

#undef STNET_INSTANTIATE

}  // namespace stnet
