#include "stnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stnet/errors.hpp"

namespace stnet {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor rank must be >= 1");
  for (auto e : shape)
    if (e == 0) throw ShapeError("tensor extents must be >= 1, got " + shape_str(shape));
}

template <typename T>
Tensor<T>::Tensor() : shape_{1}, data_(1, T{0}) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != numel(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
}

template <typename T>
Tensor<T> Tensor<T>::uniform(Rng& rng, Shape shape, T lo, T hi) {
  if (!(lo < hi)) throw RangeError("uniform: lo must be < hi");
  Tensor t(std::move(shape));
  const double dlo = lo, dhi = hi;
  for (auto& v : t.data_) {
    auto x = static_cast<T>(rng.uniform(dlo, dhi));
    // Rounding to float can land on hi.
    if (!(x < hi)) x = std::nextafter(hi, lo);
    v = x;
  }
  return t;
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size())
    throw ShapeError("index rank " + std::to_string(index.size()) + " vs tensor " + shape_str(shape_));
  std::size_t off = 0, axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis]) throw ShapeError("index out of range on axis " + std::to_string(axis));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

template <typename T>
T& Tensor<T>::at(std::initializer_list<std::size_t> index) {
  return data_[offset(index)];
}

template <typename T>
const T& Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(index)];
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  check_shape(shape);
  if (numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

template <typename T>
Tensor<T> Tensor<T>::slice0(std::size_t i) const {
  if (i >= shape_[0]) throw ShapeError("slice0 index out of range");
  Shape sub(shape_.begin() + 1, shape_.end());
  if (sub.empty()) sub = {1};
  const std::size_t n = numel(sub);
  return Tensor(sub, std::vector<T>(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                                    data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
}

template <typename T>
T Tensor<T>::sum() const {
  T s{0};
  for (auto v : data_) s += v;
  return s;
}

template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> items) {
  if (items.empty()) throw ShapeError("stack: no tensors");
  const Shape& inner = items.front().shape();
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<T> data;
  data.reserve(numel(shape));
  for (const auto& t : items) {
    if (t.shape() != inner)
      throw ShapeError("stack: shape " + shape_str(t.shape()) + " vs " + shape_str(inner));
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, ElementwiseOp op) {
  if (a.shape() != b.shape())
    throw ShapeError("elementwise: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  const std::size_t n = a.size();
  switch (op) {
    case ElementwiseOp::Add:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
      break;
    case ElementwiseOp::Sub:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
      break;
    case ElementwiseOp::Mul:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
      break;
  }
  return out;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add_inplace: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  T* pa = a.ptr();
  const T* pb = b.ptr();
  for (std::size_t i = 0, n = a.size(); i < n; ++i) pa[i] += pb[i];
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: operands must be rank 2");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner extents " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor<T> out({m, n});
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  // i-k-j order: every out[i][j] still accumulates over k in ascending order.
  for (std::size_t i = 0; i < m; ++i) {
    T* row = po + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = pa[i * k + kk];
      const T* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose2d: rank must be 2");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor<T> out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return out;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("max_abs_diff: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  T m{0};
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

#define STNET_INSTANTIATE(T)                                                   \
  template class Tensor<T>;                                                    \
  template Tensor<T> stack(std::span<const Tensor<T>>);                        \
  template Tensor<T> elementwise(const Tensor<T>&, const Tensor<T>&, ElementwiseOp); \
  template void add_inplace(Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> transpose2d(const Tensor<T>&);                            \
  template T max_abs_diff(const Tensor<T>&, const Tensor<T>&);

STNET_INSTANTIATE(float)
STNET_INSTANTIATE(double)

#undef STNET_INSTANTIATE

}  // namespace stnet
