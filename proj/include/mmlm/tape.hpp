#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "mmlm/tensor.hpp"

namespace mmlm {

// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
  friend bool operator==(Var, Var) = default;
};

// Records executed operations so that backward() can replay their gradient
// rules in reverse order. A tape is single-threaded; use one per worker.
//
// Parameters are held by reference: the referenced tensors must outlive the
// tape and stay unmodified while it is in use.
class Tape {
 public:
  Var parameter(const Tensor& value);
  Var constant(Tensor value);

  Var matvec(Var m, Var x);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var x, Real factor);
  Var tanh(Var x);
  Var sigmoid(Var x);
  Var softmax(Var x);
  // Scalar (shape [1]) result.
  Var cross_entropy(Var probs, std::size_t target, Real log_floor = kDefaultLogFloor);
  // Column `index` of a matrix: the one-hot product m * e_index.
  Var column(Var m, std::size_t index);

  Var affine(Var m, Var x, Var bias) { return add(matvec(m, x), bias); }

  const Tensor& value(Var v) const;
  Real scalar(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and sweeps every recorded op in reverse.
  void backward(Var loss);
  // Zero tensor of the right shape when v received no gradient.
  Tensor grad(Var v) const;
  // into += d(loss)/dv; no-op when v received no gradient.
  void accumulate_grad(Var v, Tensor& into) const;

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  enum class Op : std::uint8_t {
    parameter,
    constant,
    matvec,
    add,
    mul,
    scale,
    tanh,
    sigmoid,
    softmax,
    cross_entropy,
    column,
  };

  struct Node {
    explicit Node(Op o, std::uint32_t x = 0, std::uint32_t y = 0) : op(o), a(x), b(y) {}

    Op op;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::size_t index = 0;
    Real scalar = 0;
    const Tensor* ref = nullptr;
    Tensor owned;
  };

  Var push(Node node);
  const Tensor& val(std::uint32_t id) const;
  Tensor& grad_slot(std::uint32_t id);
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace mmlm
