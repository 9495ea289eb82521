// Dense row-major tensors in double precision.
//
// Most of the library works with rank-2 tensors (matrices); rank-3 appears
// only for diffusion filters addressed as (feature, hop, direction).

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace garnn {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Raised when operand shapes do not conform. The message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(const std::string& op, const Shape& a, const Shape& b);
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor column(std::initializer_list<double> values);
  static Tensor column(std::span<const double> values);
  static Tensor identity(std::size_t n);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  // Rank-2 accessors.
  std::size_t rows() const;
  std::size_t cols() const;
  double& operator()(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * shape_[1] + j]; }

  double& operator[](std::size_t flat) { return values_[flat]; }
  double operator[](std::size_t flat) const { return values_[flat]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  /// Value of a single-element tensor.
  double item() const;
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  /// Exact comparison of shape and values.
  friend bool operator==(const Tensor&, const Tensor&) = default;

  Tensor reshaped(Shape shape) const;
  void fill(double value);

 private:
  Shape shape_;
  std::vector<double> values_;
};

/// Throws DimensionError unless the tensor is rank 2.
void require_matrix(const Tensor& t, const std::string& op);

// Plain kernels. They validate shapes and allocate their result.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_bt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor matmul_at(const Tensor& a, const Tensor& b);  // a^T * b
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

/// a += s * b, shapes must match.
void axpy(Tensor& a, double s, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);
double frobenius_norm(const Tensor& a);

}  // namespace garnn
