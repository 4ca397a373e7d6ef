// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cfedit/error.hpp"

namespace cfedit {

/// Dimension list; NCHW for images, (rows, cols) for matrices.
using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, int d) { return acc * static_cast<std::size_t>(d); });
}

std::string shape_str(const Shape& shape);

/// Dense row-major tensor. Storage is an Eigen array so that element-wise
/// math can be written as Eigen expressions and GEMMs can map it directly.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MapMatrix = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>;
  using ConstMapMatrix = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(Array::Zero(static_cast<Eigen::Index>(shape_numel(shape_)))) {}

  Tensor(Shape shape, Scalar fill)
      : shape_(std::move(shape)), data_(Array::Constant(static_cast<Eigen::Index>(shape_numel(shape_)), fill)) {}

  Tensor(Shape shape, std::initializer_list<Scalar> values) : Tensor(std::move(shape)) {
    if (values.size() != size()) {
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape_));
    }
    std::copy(values.begin(), values.end(), data_.data());
  }

  Tensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::size_t>(data_.size()) != shape_numel(shape_)) {
      throw ShapeError("tensor: " + std::to_string(data_.size()) + " values for shape " + shape_str(shape_));
    }
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  int dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(data_.size()); }
  bool empty() const noexcept { return data_.size() == 0; }

  Array& array() noexcept { return data_; }
  const Array& array() const noexcept { return data_; }
  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }
  std::span<Scalar> span() noexcept { return {data_.data(), size()}; }
  std::span<const Scalar> span() const noexcept { return {data_.data(), size()}; }

  Scalar& operator[](std::size_t i) noexcept { return data_[static_cast<Eigen::Index>(i)]; }
  Scalar operator[](std::size_t i) const noexcept { return data_[static_cast<Eigen::Index>(i)]; }

  /// NCHW element access.
  Scalar& at(int n, int c, int y, int x) noexcept { return data_[offset(n, c, y, x)]; }
  Scalar at(int n, int c, int y, int x) const noexcept { return data_[offset(n, c, y, x)]; }

  void fill(Scalar value) { data_.setConstant(value); }

  /// Same data, new shape of equal element count.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != size()) {
      throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.isFinite().all(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  Eigen::Index offset(int n, int c, int y, int x) const noexcept {
    return ((static_cast<Eigen::Index>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }

  Shape shape_;
  Array data_;
};

/// Throws ShapeError naming both shapes when they differ.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace cfedit
