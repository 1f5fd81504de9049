#pragma once

#include <filesystem>

#include "stnet/container.hpp"
#include "stnet/models.hpp"

namespace stnet {

struct CheckpointMeta {
  std::size_t epoch = 0;
  double best_val_acc = 0.0;
};

/// Writes every parameter and buffer of `model` (element type T) plus the
/// meta.epoch / meta.best_val_acc scalars (f64).
template <typename T>
void save_checkpoint(const std::filesystem::path& path, Model<T>& model, const CheckpointMeta& meta);

/// Restores into an already-built model; names, dtypes and shapes must match
/// exactly (FormatError otherwise).
template <typename T>
CheckpointMeta load_checkpoint(const std::filesystem::path& path, Model<T>& model);

}  // namespace stnet
