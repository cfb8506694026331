#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "subqe/error.hpp"

namespace subqe::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

/// Dense row-major array of doubles.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_size(shape)) {
      throw Error(ErrorCode::ShapeMismatch, "tensor data does not match shape " + shape_string(shape));
    }
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  double* ptr() noexcept { return data.data(); }
  const double* ptr() const noexcept { return data.data(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline void expect_shape(const Tensor& t, const Shape& s, const char* what) {
  if (t.shape != s) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(what) + ": expected " + shape_string(s) + ", got " + shape_string(t.shape));
  }
}

inline void expect_rank(const Tensor& t, std::size_t r, const char* what) {
  if (t.rank() != r) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(what) + ": expected rank " + std::to_string(r) + ", got " + shape_string(t.shape));
  }
}

}  // namespace subqe::nn
