#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "stnet/rng.hpp"

namespace stnet {

#ifdef STNET_HIGH_PRECISION
using Real = double;
#else
using Real = float;
#endif

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
/// Throws ShapeError unless rank >= 1 and every extent >= 1.
void check_shape(const Shape& shape);

/// Dense row-major n-dimensional array; the last axis varies fastest.
/// Video activations use the [N, C, L, H, W] layout.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  /// A single zero element of shape [1].
  Tensor();
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor uniform(Rng& rng, Shape shape, T lo, T hi);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Bounds-checked multi-index access.
  T& at(std::initializer_list<std::size_t> index);
  const T& at(std::initializer_list<std::size_t> index) const;
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  void fill(T value);
  Tensor reshaped(Shape shape) const;
  /// Sub-tensor at index `i` of axis 0 (copy), e.g. one sample of a batch.
  Tensor slice0(std::size_t i) const;
  T sum() const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Stacks equally-shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> items);

enum class ElementwiseOp { Add, Sub, Mul };

template <typename T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, ElementwiseOp op);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, ElementwiseOp::Add);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, ElementwiseOp::Sub);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, ElementwiseOp::Mul);
}

/// a += b, shapes must match.
template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b);

/// [M,K] x [K,N] -> [M,N]; each output sums over K in ascending order.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a);

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace stnet
