// SPDX-License-Identifier: Apache-2.0
//
// Dense 4-D tensors (n, c, h, w) and row-major matrices.
//
// Storage is flat and row-major with the (n, c, h, w) index order, so every
// (n, c) plane is a contiguous h x w matrix. No broadcasting: any shape
// mismatch is a ShapeError.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gdn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  [[nodiscard]] std::size_t size() const { return n * c * h * w; }
  [[nodiscard]] std::size_t plane() const { return h * w; }
  [[nodiscard]] std::size_t maps() const { return n * c; }

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

std::string to_string(const Shape4& s);

template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " does not match " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  static BasicMatrix from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return BasicMatrix(r, c, std::move(data));
  }

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  [[nodiscard]] std::span<T> values() { return data_; }
  [[nodiscard]] std::span<const T> values() const { return data_; }
  [[nodiscard]] T* data() { return data_.data(); }
  [[nodiscard]] const T* data() const { return data_.data(); }

  // Copy of the top-left rows x cols block.
  [[nodiscard]] BasicMatrix block(std::size_t rows, std::size_t cols) const {
    if (rows > rows_ || cols > cols_) {
      throw ShapeError("block " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " exceeds " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    BasicMatrix out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out(i, j) = (*this)(i, j);
    return out;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  // Empty placeholder; every other constructor requires all dims >= 1.
  BasicTensor() = default;
  explicit BasicTensor(Shape4 shape, T fill = T(0)) : shape_(checked(shape)), data_(shape.size(), fill) {}
  BasicTensor(Shape4 shape, std::vector<T> data) : shape_(checked(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  [[nodiscard]] const Shape4& shape() const { return shape_; }
  [[nodiscard]] std::size_t n() const { return shape_.n; }
  [[nodiscard]] std::size_t c() const { return shape_.c; }
  [[nodiscard]] std::size_t h() const { return shape_.h; }
  [[nodiscard]] std::size_t w() const { return shape_.w; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  // Contiguous h x w plane of map (n, c).
  [[nodiscard]] std::span<T> plane(std::size_t n, std::size_t c) {
    return std::span<T>(data_).subspan((n * shape_.c + c) * shape_.plane(), shape_.plane());
  }
  [[nodiscard]] std::span<const T> plane(std::size_t n, std::size_t c) const {
    return std::span<const T>(data_).subspan((n * shape_.c + c) * shape_.plane(), shape_.plane());
  }
  // Contiguous c x h x w block of batch item n.
  [[nodiscard]] std::span<T> item(std::size_t n) {
    const std::size_t len = shape_.c * shape_.plane();
    return std::span<T>(data_).subspan(n * len, len);
  }
  [[nodiscard]] std::span<const T> item(std::size_t n) const {
    const std::size_t len = shape_.c * shape_.plane();
    return std::span<const T>(data_).subspan(n * len, len);
  }

  [[nodiscard]] std::span<T> values() { return data_; }
  [[nodiscard]] std::span<const T> values() const { return data_; }
  [[nodiscard]] T* data() { return data_.data(); }
  [[nodiscard]] const T* data() const { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  static Shape4 checked(Shape4 s) {
    if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0) {
      throw ShapeError("tensor dimensions must be >= 1, got " + to_string(s));
    }
    return s;
  }

  Shape4 shape_{};
  std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;
using Tensor = BasicTensor<double>;

enum class ElementwiseOp { kAdd, kSub, kMul };

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a);

template <typename T>
BasicTensor<T> elementwise(const BasicTensor<T>& a, const BasicTensor<T>& b, ElementwiseOp op);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(a, b, ElementwiseOp::kAdd);
}
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(a, b, ElementwiseOp::kSub);
}
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(a, b, ElementwiseOp::kMul);
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s);

template <typename T>
BasicMatrix<T> slice_channel(const BasicTensor<T>& a, std::size_t n, std::size_t c);

template <typename T>
void set_channel(BasicTensor<T>& a, std::size_t n, std::size_t c, const BasicMatrix<T>& m);

// Precision conversion (f64 <-> f32).
template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& a) {
  if (a.empty()) return {};
  std::vector<To> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<To>(a.values()[i]);
  return BasicTensor<To>(a.shape(), std::move(out));
}

template <typename T>
bool all_finite(std::span<const T> v) {
  for (T x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Debug-build guard for the "finite in, finite out" invariant.
template <typename T>
void debug_check_finite([[maybe_unused]] const BasicTensor<T>& t, [[maybe_unused]] const char* where) {
#ifndef NDEBUG
  if (!all_finite(t.values())) throw std::runtime_error(std::string("non-finite values after ") + where);
#endif
}

// Per-pixel class indices; 255 marks ignored pixels.
struct ClassMap {
  static constexpr std::uint8_t kIgnore = 255;

  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> data;

  ClassMap() = default;
  ClassMap(std::size_t h_, std::size_t w_, std::uint8_t fill = 0) : h(h_), w(w_), data(h_ * w_, fill) {}

  std::uint8_t& operator()(std::size_t i, std::size_t j) { return data[i * w + j]; }
  std::uint8_t operator()(std::size_t i, std::size_t j) const { return data[i * w + j]; }

  friend bool operator==(const ClassMap&, const ClassMap&) = default;
};

}  // namespace gdn
