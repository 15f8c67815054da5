// Copyright 2026 The pixsup Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PIXSUP_TENSOR_HPP
#define PIXSUP_TENSOR_HPP

#include <algorithm>
#include <cstddef>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pixsup/errors.hpp"

namespace pixsup {

/// Cache-line aligned allocation. Vectorized kernels then take the same
/// code path on every run, which keeps results bitwise reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

/**
 * Dense row-major tensor with a runtime shape.
 *
 * Image-like data uses rank 3 in channel/height/width order; convolution
 * weights use rank 4 (out, in, kh, kw).
 */
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(std::vector<int> shape, T fill = T(0)) : shape_(std::move(shape)) {
    for (int d : shape_) {
      if (d < 0) throw ShapeError("negative tensor dimension");
    }
    data_.assign(count(shape_), fill);
  }

  Tensor(std::vector<int> shape, const std::vector<T>& values)
      : shape_(std::move(shape)), data_(values.begin(), values.end()) {
    if (data_.size() != count(shape_)) throw ShapeError("tensor value count does not match shape");
  }

  static std::size_t count(const std::vector<int>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  }

  const std::vector<int>& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-3 (c, y, x) access.
  T& operator()(int c, int y, int x) noexcept {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  const T& operator()(int c, int y, int x) const noexcept {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  // Rank-2 (y, x) access.
  T& operator()(int y, int x) noexcept { return data_[static_cast<std::size_t>(y) * shape_[1] + x]; }
  const T& operator()(int y, int x) const noexcept { return data_[static_cast<std::size_t>(y) * shape_[1] + x]; }

  /// Channel c of a rank-3 tensor as a contiguous plane.
  std::span<T> channel(int c) noexcept {
    const std::size_t plane = static_cast<std::size_t>(shape_[1]) * shape_[2];
    return {data_.data() + c * plane, plane};
  }
  std::span<const T> channel(int c) const noexcept {
    const std::size_t plane = static_cast<std::size_t>(shape_[1]) * shape_[2];
    return {data_.data() + c * plane, plane};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool same_shape(const Tensor& o) const noexcept { return shape_ == o.shape_; }

  Tensor& operator+=(const Tensor& o) {
    require_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  std::string shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ']';
    return os.str();
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  void require_same(const Tensor& o) const {
    if (!same_shape(o)) throw ShapeError("shape mismatch " + shape_string() + " vs " + o.shape_string());
  }

  std::vector<int> shape_;
  std::vector<T, AlignedAllocator<T>> data_;
};

template <class T>
T max_value(std::span<const T> v) {
  return v.empty() ? T(0) : *std::max_element(v.begin(), v.end());
}

}  // namespace pixsup

#endif  // PIXSUP_TENSOR_HPP
