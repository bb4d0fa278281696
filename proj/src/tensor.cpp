#include "mmlm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mmlm/errors.hpp"

namespace mmlm {

Shape Shape::vector(std::size_t n) {
  if (n == 0) throw ShapeError("tensor dimensions must be positive");
  return Shape(1, n, 1);
}

Shape Shape::matrix(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw ShapeError("tensor dimensions must be positive");
  return Shape(2, rows, cols);
}

std::string Shape::str() const {
  std::ostringstream out;
  if (rank_ == 1) {
    out << "[" << rows_ << "]";
  } else {
    out << "[" << rows_ << "x" << cols_ << "]";
  }
  return out.str();
}

Tensor::Tensor(Shape shape) : shape_(shape), data_(shape.size(), Real(0)) {}

Tensor::Tensor(Shape shape, std::vector<Real> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    std::ostringstream msg;
    msg << "tensor of shape " << shape_.str() << " needs " << shape_.size() << " values, got "
        << data_.size();
    throw ShapeError(msg.str());
  }
}

Tensor Tensor::filled(Shape shape, Real value) {
  return Tensor(shape, std::vector<Real>(shape.size(), value));
}

Tensor Tensor::vector(std::initializer_list<Real> values) {
  return Tensor(Shape::vector(values.size()), std::vector<Real>(values));
}

Tensor Tensor::vector(std::vector<Real> values) {
  const auto n = values.size();
  return Tensor(Shape::vector(n), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<Real> values) {
  return Tensor(Shape::matrix(rows, cols), std::vector<Real>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor out = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) out.at(i, i) = 1;
  return out;
}

Tensor Tensor::one_hot(std::size_t n, std::size_t index) {
  if (index >= n) throw IndexError("one-hot index out of range");
  Tensor out = zeros(n);
  out[index] = 1;
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

Tensor matvec(const Tensor& m, const Tensor& x) {
  if (m.rank() != 2 || x.rank() != 1 || m.cols() != x.size()) {
    throw ShapeError("matvec shape mismatch: " + m.shape().str() + " * " + x.shape().str());
  }
  Tensor out = Tensor::zeros(m.rows());
  const auto cols = m.cols();
  const Real* row = m.data().data();
  const Real* xv = x.data().data();
  for (std::size_t r = 0; r < m.rows(); ++r, row += cols) {
    Real acc = 0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * xv[c];
    out[r] = acc;
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add shape mismatch: " + a.shape().str() + " + " + b.shape().str());
  }
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Real sigmoid(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

Tensor pointwise(Pointwise kind, const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = kind == Pointwise::tanh ? std::tanh(v) : sigmoid(v);
  return out;
}

Tensor softmax(const Tensor& x) {
  if (x.rank() != 1) throw ShapeError("softmax expects a rank-1 tensor, got " + x.shape().str());
  Tensor out = x;
  auto values = out.data();
  const Real peak = *std::max_element(values.begin(), values.end());
  Real total = 0;
  for (auto& v : values) {
    v = std::exp(v - peak);
    total += v;
  }
  for (auto& v : values) v /= total;
  return out;
}

Real cross_entropy(const Tensor& pred, std::size_t target, Real log_floor) {
  if (target >= pred.size()) {
    std::ostringstream msg;
    msg << "cross_entropy target index " << target << " out of range for " << pred.size()
        << " classes";
    throw IndexError(msg.str());
  }
  return -std::log(std::max(pred[target], log_floor));
}

}  // namespace mmlm
