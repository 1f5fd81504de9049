#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "stnet/tensor.hpp"

namespace stnet {

/// Binary tensor container ("STC1"), also used for checkpoints.
///
///   magic      4 bytes  "STC1"
///   count      u32
///   entries:   name_len u16, name (UTF-8), dtype u8 (0 = f32, 1 = f64),
///              rank u8, extents u64[rank], row-major payload
///
/// All integers and floats are little-endian. Names are unique.
using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

struct ContainerEntry {
  std::string name;
  AnyTensor tensor;
};

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

std::string encode_container(std::span<const ContainerEntry> entries);
/// Validates magic, bounds and payload lengths; throws FormatError and never
/// returns a partially decoded container.
std::vector<ContainerEntry> decode_container(std::string_view bytes);

void write_container(const std::filesystem::path& path, std::span<const ContainerEntry> entries);
std::vector<ContainerEntry> read_container(const std::filesystem::path& path);

/// Finds an entry by name and converts it to T. Throws FormatError if absent.
template <typename T>
Tensor<T> container_tensor(const std::vector<ContainerEntry>& entries, std::string_view name);

}  // namespace stnet
