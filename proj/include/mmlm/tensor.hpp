#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mmlm {

#ifdef MMLM_FLOAT32
using Real = float;
#else
using Real = double;
#endif

// Rank-1 or rank-2 extent. A rank-1 shape keeps cols == 1 internally.
class Shape {
 public:
  Shape() = default;
  static Shape vector(std::size_t n);
  static Shape matrix(std::size_t rows, std::size_t cols);

  int rank() const { return rank_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_ * cols_; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  Shape(int rank, std::size_t rows, std::size_t cols) : rank_(rank), rows_(rows), cols_(cols) {}

  int rank_ = 1;
  std::size_t rows_ = 0;
  std::size_t cols_ = 1;
};

// Dense row-major array of reals. Plain value type.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor zeros(std::size_t n) { return Tensor(Shape::vector(n)); }
  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(Shape::matrix(rows, cols)); }
  static Tensor filled(Shape shape, Real value);
  static Tensor vector(std::initializer_list<Real> values);
  static Tensor vector(std::vector<Real> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<Real> values);
  static Tensor identity(std::size_t n);
  static Tensor one_hot(std::size_t n, std::size_t index);

  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  std::size_t rows() const { return shape_.rows(); }
  std::size_t cols() const { return shape_.cols(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real& at(std::size_t r, std::size_t c) { return data_[r * shape_.cols() + c]; }
  Real at(std::size_t r, std::size_t c) const { return data_[r * shape_.cols() + c]; }

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

Tensor matvec(const Tensor& m, const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);

enum class Pointwise { tanh, sigmoid };
Tensor pointwise(Pointwise kind, const Tensor& x);

// Max-subtracted softmax over a rank-1 tensor.
Tensor softmax(const Tensor& x);

inline constexpr Real kDefaultLogFloor = Real(1e-12);

// -log(max(pred[target], floor)).
Real cross_entropy(const Tensor& pred, std::size_t target, Real log_floor = kDefaultLogFloor);

Real sigmoid(Real x);

}  // namespace mmlm
