#include "gradnoise/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gradnoise/rng.hpp"

namespace gradnoise {

std::size_t Shape::operator[](std::size_t axis) const {
  if (axis >= rank_) throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + str());
  return dims_[axis];
}

std::size_t Shape::numel() const { return rank_ == 1 ? dims_[0] : dims_[0] * dims_[1]; }

std::string Shape::str() const {
  std::ostringstream os;
  os << '[' << dims_[0];
  if (rank_ == 2) os << ", " << dims_[1];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_.str());
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape(values.size()), std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n_rows = rows.size();
  const std::size_t n_cols = n_rows == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(n_rows * n_cols);
  for (const auto& r : rows) {
    if (r.size() != n_cols) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor(Shape(n_rows, n_cols), std::move(data));
}

std::span<double> Tensor::row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * cols(), cols());
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + ": expected rank-2 operand, got " + t.shape().str());
}

[[noreturn]] void mismatch(const char* what, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(what) + ": incompatible shapes " + a.shape().str() + " and " + b.shape().str());
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (k != b.rows()) mismatch("matmul", a, b);
  Tensor out(Shape(n, m));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = po + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_tn");
  require_rank2(b, "matmul_tn");
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  if (k != b.rows()) mismatch("matmul_tn", a, b);
  Tensor out(Shape(n, m));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = pa + p * n;
    const double* brow = pb + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* orow = po + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (k != b.cols()) mismatch("matmul_nt", a, b);
  Tensor out(Shape(n, m));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      po[i * m + j] = acc;
    }
  }
  return out;
}

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op) {
  if (!(a.shape() == b.shape())) mismatch("elementwise", a, b);
  Tensor out(a.shape());
  auto pa = a.data();
  auto pb = b.data();
  auto po = out.data();
  switch (op) {
    case ElementwiseOp::kAdd:
      for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] + pb[i];
      break;
    case ElementwiseOp::kSub:
      for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] - pb[i];
      break;
    case ElementwiseOp::kMul:
      for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] * pb[i];
      break;
  }
  return out;
}

Tensor gaussian_tensor(Rng& rng, Shape shape, double mean, double stddev) {
  if (!(stddev >= 0.0)) throw std::invalid_argument("gaussian_tensor: stddev must be non-negative");
  Tensor out(shape, mean);
  if (stddev == 0.0) return out;
  for (double& v : out.data()) v = rng.gaussian(mean, stddev);
  return out;
}

double global_norm(std::span<const Tensor> tensors) {
  double sum = 0.0;
  for (const auto& t : tensors)
    for (double v : t.data()) sum += v * v;
  return std::sqrt(sum);
}

double global_norm(std::span<const Tensor* const> tensors) {
  double sum = 0.0;
  for (const Tensor* t : tensors)
    for (double v : t->data()) sum += v * v;
  return std::sqrt(sum);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) mismatch("max_abs_diff", a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace gradnoise
