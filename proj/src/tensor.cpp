#include "cakgcn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cakgcn {

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (numel_of(shape) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
}

Tensor Tensor::full(Shape s, double v) {
  Tensor t(std::move(s));
  t.fill(v);
  return t;
}

Tensor Tensor::vec(std::vector<double> values) {
  auto n = static_cast<std::int64_t>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::int64_t rows, std::int64_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::int64_t n) {
  Tensor t({n, n});
  for (std::int64_t i = 0; i < n; ++i) t.data[static_cast<std::size_t>(i * n + i)] = 1.0;
  return t;
}

std::int64_t Tensor::rows() const {
  if (rank() != 2) throw std::logic_error("rows() on tensor of shape " + shape_str(shape));
  return shape[0];
}

std::int64_t Tensor::cols() const {
  if (rank() != 2) throw std::logic_error("cols() on tensor of shape " + shape_str(shape));
  return shape[1];
}

double Tensor::scalar_value() const {
  if (!is_scalar()) throw std::logic_error("scalar_value() on tensor of shape " + shape_str(shape));
  return data[0];
}

double& Tensor::at(std::int64_t r, std::int64_t c) {
  return data[static_cast<std::size_t>(r * cols() + c)];
}

double Tensor::at(std::int64_t r, std::int64_t c) const {
  return data[static_cast<std::size_t>(r * cols() + c)];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(double v) {
  for (auto& x : data) x = v;
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

}  // namespace cakgcn
