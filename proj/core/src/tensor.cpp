#include "thinktuning/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace thinktuning {

std::int64_t numel_of(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("tensor shape has negative dimension");
    n *= d;
  }
  return n;
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::int64_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape.size() > 2) throw std::invalid_argument("tensor rank > 2 unsupported");
  if (numel_of(shape) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("tensor shape " + shape_string(shape) + " does not match data size " +
                                std::to_string(data.size()));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(std::vector<std::int64_t> s) {
  auto n = numel_of(s);
  return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<std::int64_t> s, double v) {
  auto n = numel_of(s);
  return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v));
}

Tensor Tensor::vector(std::vector<double> v) {
  auto n = static_cast<std::int64_t>(v.size());
  return Tensor({n}, std::move(v));
}

std::int64_t Tensor::rows() const {
  if (rank() == 2) return shape[0];
  if (rank() == 1) return 1;
  throw std::logic_error("rows() on scalar tensor");
}

std::int64_t Tensor::cols() const {
  if (rank() == 2) return shape[1];
  if (rank() == 1) return shape[0];
  throw std::logic_error("cols() on scalar tensor");
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace thinktuning
