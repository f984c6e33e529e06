#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hippo/numcore/error.hpp"

namespace hippo {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
    n *= d;
  }
  return n;
}

// Dense row-major array with an explicit shape. Every dimension is positive
// and the element count always equals the product of the shape.
template <typename Real>
class BasicTensor {
 public:
  using value_type = Real;

  BasicTensor() : shape_{1}, data_(1, Real(0)) {}

  explicit BasicTensor(Shape shape, Real fill = Real(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  BasicTensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
      throw ShapeError("shape " + shape_string(shape_) + " does not match " +
                       std::to_string(data_.size()) + " values");
    }
  }

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape), Real(0)); }
  static BasicTensor ones(Shape shape) { return BasicTensor(std::move(shape), Real(1)); }
  static BasicTensor scalar(Real v) { return BasicTensor(Shape{1}, std::vector<Real>{v}); }
  static BasicTensor vector(std::initializer_list<Real> v) {
    return BasicTensor(Shape{v.size()}, std::vector<Real>(v));
  }
  static BasicTensor matrix(std::size_t rows, std::size_t cols, std::vector<Real> v) {
    return BasicTensor(Shape{rows, cols}, std::move(v));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const {
    if (i >= shape_.size()) throw ShapeError("axis " + std::to_string(i) + " out of range for " + shape_string(shape_));
    return shape_[i];
  }
  std::size_t size() const noexcept { return data_.size(); }

  // Rows/cols view a tensor as a matrix: rank-1 tensors are a single row.
  std::size_t rows() const noexcept { return shape_.size() == 1 ? 1 : shape_[0]; }
  std::size_t cols() const noexcept { return shape_.size() == 1 ? shape_[0] : size() / shape_[0]; }

  std::span<Real> data() noexcept { return data_; }
  std::span<const Real> data() const noexcept { return data_; }
  const std::vector<Real>& values() const noexcept { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  const Real& operator[](std::size_t i) const { return data_[i]; }
  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const Real& operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<Real> row(std::size_t r) { return std::span<Real>(data_).subspan(r * cols(), cols()); }
  std::span<const Real> row(std::size_t r) const {
    return std::span<const Real>(data_).subspan(r * cols(), cols());
  }

  Real item() const {
    if (data_.size() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_string(shape_));
    return data_[0];
  }

  BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

  template <typename Other>
  BasicTensor<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return BasicTensor<Other>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
  }

  // Throws NumericError naming `op` when a value is NaN or Inf.
  const BasicTensor& check_finite(std::string_view op) const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i])) {
        throw NumericError(std::string(op) + ": non-finite value at flat index " + std::to_string(i));
      }
    }
    return *this;
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
};

using Tensor = BasicTensor<double>;

// Stable log-sum-exp along `axis`. The reduced axis is removed from the
// shape; a fully reduced tensor has shape [1].
template <typename Real>
BasicTensor<Real> logsumexp(const BasicTensor<Real>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("logsumexp: axis " + std::to_string(axis) + " invalid for rank " + std::to_string(x.rank()));
  }
  x.check_finite("logsumexp input");
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  BasicTensor<Real> out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      Real m = -std::numeric_limits<Real>::infinity();
      for (std::size_t k = 0; k < n; ++k) m = std::max(m, x[(o * n + k) * inner + in]);
      Real acc = 0;
      for (std::size_t k = 0; k < n; ++k) acc += std::exp(x[(o * n + k) * inner + in] - m);
      out[o * inner + in] = m + std::log(acc);
    }
  }
  return out;
}

}  // namespace hippo
