#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace thinktuning {

// Dense row-major tensor of doubles, rank 0..2. Rank 0 is a scalar (one
// element, empty shape), rank 1 a vector, rank 2 a matrix. All training math
// runs in 64-bit floats; accumulating in narrower types is out of scope.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> s, std::vector<double> d);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::int64_t> s);
  static Tensor full(std::vector<std::int64_t> s, double v);
  static Tensor vector(std::vector<double> v);

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  bool is_scalar() const { return shape.empty(); }

  std::int64_t rows() const;
  std::int64_t cols() const;

  double& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t r, std::int64_t c) { return data[static_cast<std::size_t>(r * cols() + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return data[static_cast<std::size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
};

std::int64_t numel_of(const std::vector<std::int64_t>& shape);
std::string shape_string(const std::vector<std::int64_t>& shape);

}  // namespace thinktuning
