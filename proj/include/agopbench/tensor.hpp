#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "agopbench/errors.hpp"

namespace agopbench {

/// Dense n-dimensional array of doubles in row-major order.
/// Invariant: data.size() == product(shape).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);
  /// 1-D tensor from a value list; mostly for tests and tiny fixtures.
  static Tensor vec(std::initializer_list<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  double& at3(std::size_t c, std::size_t i, std::size_t j);
  double at3(std::size_t c, std::size_t i, std::size_t j) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;

  bool operator==(const Tensor& other) const = default;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace agopbench
