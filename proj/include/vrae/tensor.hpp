#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vrae {

/// Dimensions of a rank-4 tensor in (batch, channel, height, width) order.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t size() const { return n * c * h * w; }
  constexpr std::size_t image_size() const { return c * h * w; }
  constexpr std::size_t plane_size() const { return h * w; }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
           std::to_string(w) + ")";
  }
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major n->c->h->w tensor. Value type; copies are deep.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{}) : shape_(shape), data_(shape.size(), fill) {}

  BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  std::span<T> image(std::size_t n) {
    return std::span<T>(data_).subspan(n * shape_.image_size(), shape_.image_size());
  }
  std::span<const T> image(std::size_t n) const {
    return std::span<const T>(data_).subspan(n * shape_.image_size(), shape_.image_size());
  }

  std::span<T> plane(std::size_t n, std::size_t c) {
    return std::span<T>(data_).subspan(offset(n, c, 0, 0), shape_.plane_size());
  }
  std::span<const T> plane(std::size_t n, std::size_t c) const {
    return std::span<const T>(data_).subspan(offset(n, c, 0, 0), shape_.plane_size());
  }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) { return data_[offset(n, c, h, w)]; }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
  }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// Reinterpret the same data under a different shape of equal size.
  BasicTensor reshaped(Shape shape) const& { return BasicTensor(shape, data_); }
  BasicTensor reshaped(Shape shape) && { return BasicTensor(shape, std::move(data_)); }

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  /// Copy of images [first, first + count) along the batch dimension.
  BasicTensor batch_slice(std::size_t first, std::size_t count) const {
    if (first + count > shape_.n) throw ShapeError("batch slice out of range for " + shape_.str());
    const auto begin = data_.begin() + static_cast<std::ptrdiff_t>(first * shape_.image_size());
    return BasicTensor({count, shape_.c, shape_.h, shape_.w},
                       std::vector<T>(begin, begin + static_cast<std::ptrdiff_t>(count * shape_.image_size())));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Tensor4 = BasicTensor<float>;
using Tensor4d = BasicTensor<double>;

/// Stack single images (n == 1 each, identical c/h/w) into one batch.
template <typename T>
BasicTensor<T> stack(std::span<const BasicTensor<T>> images) {
  if (images.empty()) throw ShapeError("cannot stack an empty list of images");
  const Shape first = images.front().shape();
  std::vector<T> data;
  data.reserve(first.image_size() * images.size());
  std::size_t count = 0;
  for (const auto& img : images) {
    const Shape s = img.shape();
    if (s.c != first.c || s.h != first.h || s.w != first.w) {
      throw ShapeError("cannot stack " + s.str() + " with " + first.str());
    }
    data.insert(data.end(), img.values().begin(), img.values().end());
    count += s.n;
  }
  return BasicTensor<T>({count, first.c, first.h, first.w}, std::move(data));
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": shape " + a.str() + " does not match " + b.str());
}

}  // namespace vrae
