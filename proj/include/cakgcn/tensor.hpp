#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace cakgcn {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of doubles. Rank 1 and 2 are all the model needs;
// a scalar is shape {1}.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}
  Tensor(Shape s, std::vector<double> values);

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vec(std::vector<double> values);
  static Tensor matrix(std::int64_t rows, std::int64_t cols, std::vector<double> values);
  static Tensor identity(std::int64_t n);

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t rows() const;
  std::int64_t cols() const;
  bool is_scalar() const { return data.size() == 1; }
  double scalar_value() const;

  double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t r, std::int64_t c);
  double at(std::int64_t r, std::int64_t c) const;

  bool all_finite() const;
  void fill(double v);
};

bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace cakgcn
