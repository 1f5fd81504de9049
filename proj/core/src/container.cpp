#include "stnet/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "stnet/errors.hpp"

namespace stnet {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'C', '1'};

template <typename U>
void put_le(std::string& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(U)) throw FormatError("container truncated at byte " + std::to_string(pos));
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    v |= static_cast<U>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  pos += sizeof(U);
  return v;
}

template <typename T>
void put_payload(std::string& out, const Tensor<T>& t) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (T v : t.data()) put_le(out, std::bit_cast<Bits>(v));
}

template <typename T>
Tensor<T> get_payload(std::string_view bytes, std::size_t& pos, Shape shape) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const std::size_t n = numel(shape);
  if ((bytes.size() - pos) / sizeof(T) < n) throw FormatError("container payload truncated");
  std::vector<T> data(n);
  for (auto& v : data) v = std::bit_cast<T>(get_le<Bits>(bytes, pos));
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace

std::string encode_container(std::span<const ContainerEntry> entries) {
  std::set<std::string_view> names;
  std::string out(kMagic, 4);
  put_le(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (!names.insert(e.name).second) throw FormatError("duplicate container entry '" + e.name + "'");
    if (e.name.size() > 0xffff) throw FormatError("container entry name too long");
    put_le(out, static_cast<std::uint16_t>(e.name.size()));
    out += e.name;
    std::visit(
        [&](const auto& t) {
          using T = typename std::decay_t<decltype(t)>::value_type;
          out.push_back(static_cast<char>(std::is_same_v<T, float> ? DType::F32 : DType::F64));
          if (t.rank() > 0xff) throw FormatError("container tensor rank too large");
          out.push_back(static_cast<char>(t.rank()));
          for (auto d : t.shape()) put_le(out, static_cast<std::uint64_t>(d));
          put_payload(out, t);
        },
        e.tensor);
  }
  return out;
}

std::vector<ContainerEntry> decode_container(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad container magic");
  std::size_t pos = 4;
  const auto count = get_le<std::uint32_t>(bytes, pos);
  std::vector<ContainerEntry> entries;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint16_t>(bytes, pos);
    if (bytes.size() - pos < len) throw FormatError("container name truncated");
    std::string name(bytes.substr(pos, len));
    pos += len;
    if (!names.insert(name).second) throw FormatError("duplicate container entry '" + name + "'");
    const auto dtype = get_le<std::uint8_t>(bytes, pos);
    const auto rank = get_le<std::uint8_t>(bytes, pos);
    if (rank == 0) throw FormatError("entry '" + name + "' has rank 0");
    Shape shape(rank);
    std::size_t total = 1;
    for (auto& d : shape) {
      const auto e = get_le<std::uint64_t>(bytes, pos);
      if (e == 0) throw FormatError("entry '" + name + "' has a zero extent");
      if (e > bytes.size() || total > bytes.size() / e) throw FormatError("entry '" + name + "' extents exceed file size");
      d = static_cast<std::size_t>(e);
      total *= d;
    }
    if (dtype == static_cast<std::uint8_t>(DType::F32))
      entries.push_back({std::move(name), get_payload<float>(bytes, pos, std::move(shape))});
    else if (dtype == static_cast<std::uint8_t>(DType::F64))
      entries.push_back({std::move(name), get_payload<double>(bytes, pos, std::move(shape))});
    else
      throw FormatError("entry '" + name + "' has unknown dtype " + std::to_string(dtype));
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes after last container entry");
  return entries;
}

void write_container(const std::filesystem::path& path, std::span<const ContainerEntry> entries) {
  const std::string bytes = encode_container(entries);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  f.close();
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

std::vector<ContainerEntry> read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_container(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

template <typename T>
Tensor<T> container_tensor(const std::vector<ContainerEntry>& entries, std::string_view name) {
  for (const auto& e : entries) {
    if (e.name != name) continue;
    return std::visit([](const auto& t) { return t.template cast<T>(); }, e.tensor);
  }
  throw FormatError("container has no entry '" + std::string(name) + "'");
}

template Tensor<float> container_tensor(const std::vector<ContainerEntry>&, std::string_view);
template Tensor<double> container_tensor(const std::vector<ContainerEntry>&, std::string_view);

}  // namespace stnet
