#include "stnet/checkpoint.hpp"

#include <map>

#include "stnet/errors.hpp"

namespace stnet {

template <typename T>
void save_checkpoint(const std::filesystem::path& path, Model<T>& model, const CheckpointMeta& meta) {
  std::vector<ContainerEntry> entries;
  for (const auto& s : model.slots()) entries.push_back({s.name, *s.value});
  entries.push_back({"meta.epoch", Tensor<double>({1}, static_cast<double>(meta.epoch))});
  entries.push_back({"meta.best_val_acc", Tensor<double>({1}, meta.best_val_acc)});
  write_container(path, entries);
}

template <typename T>
CheckpointMeta load_checkpoint(const std::filesystem::path& path, Model<T>& model) {
  auto entries = read_container(path);
  std::map<std::string, AnyTensor*> by_name;
  for (auto& e : entries) by_name[e.name] = &e.tensor;

  auto slots = model.slots();
  for (auto& s : slots) {
    auto it = by_name.find(s.name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks '" + s.name + "'");
    const auto* t = std::get_if<Tensor<T>>(it->second);
    if (!t) throw FormatError("checkpoint entry '" + s.name + "' has the wrong element type");
    if (t->shape() != s.value->shape())
      throw FormatError("checkpoint entry '" + s.name + "' has shape " + shape_str(t->shape()) + ", model expects " +
                        shape_str(s.value->shape()));
  }
  if (by_name.size() != slots.size() + 2)
    throw FormatError("checkpoint has entries the model does not know about");
  for (auto& s : slots) *s.value = std::get<Tensor<T>>(*by_name[s.name]);

  CheckpointMeta meta;
  meta.epoch = static_cast<std::size_t>(container_tensor<double>(entries, "meta.epoch")[0]);
  meta.best_val_acc = container_tensor<double>(entries, "meta.best_val_acc")[0];
  return meta;
}

template void save_checkpoint(const std::filesystem::path&, Model<float>&, const CheckpointMeta&);
template void save_checkpoint(const std::filesystem::path&, Model<double>&, const CheckpointMeta&);
template CheckpointMeta load_checkpoint(const std::filesystem::path&, Model<float>&);
template CheckpointMeta load_checkpoint(const std::filesystem::path&, Model<double>&);

}  // namespace stnet
