#pragma once

#include <concepts>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "thermo/error.hpp"
#include "thermo/rng.hpp"

namespace thermo {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace detail {

// std::allocator that default-initializes on resize, so buffers that are
// overwritten in full skip the zero-fill pass.
template <typename T>
struct default_init_allocator : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = default_init_allocator<U>;
  };
  using std::allocator<T>::allocator;
  template <typename U>
  void construct(U* ptr) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(ptr)) U;
  }
  template <typename U, typename... Args>
  void construct(U* ptr, Args&&... args) {
    ::new (static_cast<void*>(ptr)) U(std::forward<Args>(args)...);
  }
};

}  // namespace detail

// Dense N-dimensional array, row-major. 4-D tensors are ordered
// (batch N, channels C, height H, width W); flattening and reshaping never
// reorder the underlying data. Precision is picked at construction through
// the template argument: float for training, double for gradient checks.
template <std::floating_point T>
class Tensor {
 public:
  using Buffer = std::vector<T, detail::default_init_allocator<T>>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    data_.assign(checked_size(shape_), T(0));
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (checked_size(shape_) != data_.size()) {
      throw ShapeError("tensor: shape " + shape_str(shape_) + " implies " +
                       std::to_string(shape_product(shape_)) +
                       " elements, got " + std::to_string(data.size()));
    }
  }

  // Storage left default-initialized; every element must be written before
  // it is read. For kernels that overwrite their full output.
  static Tensor uninitialized(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.resize(checked_size(t.shape_));
    return t;
  }

  static Tensor full(Shape shape, T value) {
    Tensor t = uninitialized(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  Buffer& values() { return data_; }
  const Buffer& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Flat offset of (n, c, y, x) in a 4-D tensor.
  std::size_t offset4(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }
  T& at4(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[offset4(n, c, y, x)];
  }
  const T& at4(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[offset4(n, c, y, x)];
  }

  T& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  // Same data, new shape; sizes must agree.
  Tensor reshaped(Shape new_shape) const {
    if (shape_product(new_shape) != data_.size()) {
      throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " +
                       shape_str(new_shape));
    }
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void fill_uniform(SplitMix64& rng, T lo, T hi) {
    for (T& v : data_) v = static_cast<T>(rng.next_uniform(lo, hi));
  }

 private:
  static std::size_t checked_size(const Shape& shape) {
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
    }
    return shape_product(shape);
  }

  Shape shape_;
  Buffer data_;
};

template <std::floating_point T>
bool operator==(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && a.values() == b.values();
}

}  // namespace thermo
