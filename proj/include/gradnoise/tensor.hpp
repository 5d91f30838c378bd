#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradnoise {

class Rng;

/// Raised when operand shapes do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Rank-1 or rank-2 extent.
class Shape {
 public:
  Shape() = default;
  explicit Shape(std::size_t n) : dims_{n, 0}, rank_(1) {}
  Shape(std::size_t rows, std::size_t cols) : dims_{rows, cols}, rank_(2) {}

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t axis) const;
  std::size_t numel() const;
  std::string str() const;

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.rank_ == b.rank_ && a.dims_ == b.dims_;
  }

 private:
  std::array<std::size_t, 2> dims_{0, 0};
  std::size_t rank_ = 1;
};

/// Dense row-major float64 array of rank 1 or 2.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_[0]; }
  std::size_t cols() const { return shape_.rank() == 2 ? shape_[1] : 1; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_{0};
  std::vector<double> data_;
};

enum class ElementwiseOp { kAdd, kSub, kMul };

Tensor matmul(const Tensor& a, const Tensor& b);
/// a^T * b without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseOp::kAdd); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseOp::kSub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseOp::kMul); }

/// i.i.d. N(mean, stddev^2) entries. stddev == 0 yields a constant tensor.
Tensor gaussian_tensor(Rng& rng, Shape shape, double mean, double stddev);

/// L2 norm over the concatenation of every element of every tensor.
double global_norm(std::span<const Tensor> tensors);
double global_norm(std::span<const Tensor* const> tensors);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace gradnoise
