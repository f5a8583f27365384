// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stackdedup::nn {

using Shape = std::vector<std::size_t>;

// Raised whenever operand dimensions disagree. There is no broadcasting.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(const Shape& shape);

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// Dense row-major tensor. Rank 0 is not used; scalars have shape {1}.
template <class Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
  }

  static Tensor scalar(Real v) { return Tensor({1}, std::vector<Real>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  Real* raw() { return data_.data(); }
  const Real* raw() const { return data_.data(); }
  std::vector<Real>& storage() { return data_; }
  const std::vector<Real>& storage() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  // Row view of a matrix (rank 2).
  std::span<Real> row(std::size_t r) {
    const std::size_t w = shape_.back();
    return std::span<Real>(data_).subspan(r * w, w);
  }
  std::span<const Real> row(std::size_t r) const {
    const std::size_t w = shape_.back();
    return std::span<const Real>(data_).subspan(r * w, w);
  }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

// A named trainable tensor with its accumulated gradient.
template <class Real>
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Shape shape)
      : name(std::move(n)), value(shape), grad(shape) {}

  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;

  void zero_grad() { grad.fill(Real{0}); }
};

template <class Real>
using ParameterList = std::vector<Parameter<Real>*>;

template <class Real>
void zero_grads(const ParameterList<Real>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace stackdedup::nn
