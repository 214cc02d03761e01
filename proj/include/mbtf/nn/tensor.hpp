#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mbtf/error.hpp"

namespace mbtf::nn {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense row-major n-d array. The last axis is contiguous; model tensors are
// laid out [channel, frequency, time] so time rows are contiguous.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    for (int d : shape_) {
      if (d < 0) throw ValidationError("negative dimension in shape " + shape_str(shape_));
    }
    data_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
      throw ValidationError("data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_str(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int c, int f, int t) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + f) * shape_[2] + t];
  }
  const T& at(int c, int f, int t) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + f) * shape_[2] + t];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
      throw ValidationError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
void require_shape(const Tensor<T>& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw ValidationError(std::string(what) + ": expected shape " + shape_str(expected) +
                          ", got " + shape_str(t.shape()));
  }
}

template <typename T>
void require_rank(const Tensor<T>& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw ValidationError(std::string(what) + ": expected rank " + std::to_string(rank) +
                          ", got shape " + shape_str(t.shape()));
  }
}

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  return std::inner_product(a.vec().begin(), a.vec().end(), b.vec().begin(), T(0));
}

}  // namespace mbtf::nn
