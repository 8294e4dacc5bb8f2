#include "cogdiag/tensor.hpp"

#include <cmath>

#include "cogdiag/errors.hpp"

namespace cogdiag {

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.shape_ = {1};
  t.data_ = {v};
  return t;
}

Tensor Tensor::zeros(std::size_t n) {
  Tensor t;
  t.shape_ = {n};
  t.data_.assign(n, 0.0);
  return t;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
  Tensor t;
  t.shape_ = {rows, cols};
  t.data_.assign(rows * cols, 0.0);
  return t;
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double v) {
  Tensor t = zeros(rows, cols);
  for (auto& x : t.data_) x = v;
  return t;
}

Tensor Tensor::from_vector(std::vector<double> data) {
  Tensor t;
  t.shape_ = {data.size()};
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::from_matrix(std::vector<double> data, std::size_t rows, std::size_t cols) {
  if (data.size() != rows * cols)
    throw ShapeError("matrix data length " + std::to_string(data.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  Tensor t;
  t.shape_ = {rows, cols};
  t.data_ = std::move(data);
  return t;
}

std::string Tensor::shape_str() const {
  if (shape_.empty()) return "[]";
  std::string s = "[" + std::to_string(shape_[0]);
  if (rank() == 2) s += "x" + std::to_string(shape_[1]);
  return s + "]";
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace cogdiag
