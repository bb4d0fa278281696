#include "mmlm/tape.hpp"

#include <algorithm>
#include <cmath>

#include "mmlm/errors.hpp"

namespace mmlm {

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::check(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw Error("variable does not belong to this tape");
}

const Tensor& Tape::val(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.ref != nullptr ? *n.ref : n.owned;
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return val(v.id);
}

Real Tape::scalar(Var v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) throw ShapeError("expected a scalar, got " + t.shape().str());
  return t[0];
}

Var Tape::parameter(const Tensor& value) {
  Node n(Op::parameter);
  n.ref = &value;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n(Op::constant);
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::matvec(Var m, Var x) {
  check(m);
  check(x);
  Node n(Op::matvec, m.id, x.id);
  n.owned = mmlm::matvec(val(m.id), val(x.id));
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  Node n(Op::add, a.id, b.id);
  n.owned = mmlm::add(val(a.id), val(b.id));
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& x = val(a.id);
  const Tensor& y = val(b.id);
  if (x.shape() != y.shape()) {
    throw ShapeError("mul shape mismatch: " + x.shape().str() + " * " + y.shape().str());
  }
  Node n(Op::mul, a.id, b.id);
  n.owned = x;
  for (std::size_t i = 0; i < x.size(); ++i) n.owned[i] *= y[i];
  return push(std::move(n));
}

Var Tape::scale(Var x, Real factor) {
  check(x);
  Node n(Op::scale, x.id);
  n.scalar = factor;
  n.owned = val(x.id);
  for (auto& v : n.owned.data()) v *= factor;
  return push(std::move(n));
}

Var Tape::tanh(Var x) {
  check(x);
  Node n(Op::tanh, x.id);
  n.owned = pointwise(Pointwise::tanh, val(x.id));
  return push(std::move(n));
}

Var Tape::sigmoid(Var x) {
  check(x);
  Node n(Op::sigmoid, x.id);
  n.owned = pointwise(Pointwise::sigmoid, val(x.id));
  return push(std::move(n));
}

Var Tape::softmax(Var x) {
  check(x);
  Node n(Op::softmax, x.id);
  n.owned = mmlm::softmax(val(x.id));
  return push(std::move(n));
}

Var Tape::cross_entropy(Var probs, std::size_t target, Real log_floor) {
  check(probs);
  Node n(Op::cross_entropy, probs.id);
  n.index = target;
  n.scalar = log_floor;
  n.owned = Tensor::vector({mmlm::cross_entropy(val(probs.id), target, log_floor)});
  return push(std::move(n));
}

Var Tape::column(Var m, std::size_t index) {
  check(m);
  const Tensor& mat = val(m.id);
  if (mat.rank() != 2) throw ShapeError("column expects a matrix, got " + mat.shape().str());
  if (index >= mat.cols()) {
    throw IndexError("column index " + std::to_string(index) + " out of range for " +
                     mat.shape().str());
  }
  Node n(Op::column, m.id);
  n.index = index;
  n.owned = Tensor::zeros(mat.rows());
  for (std::size_t r = 0; r < mat.rows(); ++r) n.owned[r] = mat.at(r, index);
  return push(std::move(n));
}

Tensor& Tape::grad_slot(std::uint32_t id) {
  Tensor& g = grads_[id];
  if (g.empty()) g = Tensor(val(id).shape());
  return g;
}

Tensor Tape::grad(Var v) const {
  check(v);
  if (v.id >= grads_.size() || grads_[v.id].empty()) return Tensor(val(v.id).shape());
  return grads_[v.id];
}

void Tape::accumulate_grad(Var v, Tensor& into) const {
  check(v);
  if (into.shape() != val(v.id).shape()) {
    throw ShapeError("gradient buffer " + into.shape().str() + " does not match " +
                     val(v.id).shape().str());
  }
  if (v.id >= grads_.size() || grads_[v.id].empty()) return;
  const Tensor& g = grads_[v.id];
  for (std::size_t i = 0; i < g.size(); ++i) into[i] += g[i];
}

void Tape::backward(Var loss) {
  check(loss);
  if (val(loss.id).size() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + val(loss.id).shape().str());
  }
  grads_.assign(nodes_.size(), Tensor{});
  grad_slot(loss.id)[0] = 1;

  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    if (grads_[id].empty()) continue;
    const Node& n = nodes_[id];
    const Tensor& g = grads_[id];
    const Tensor& out = val(id);
    switch (n.op) {
      case Op::parameter:
      case Op::constant:
        break;
      case Op::matvec: {
        const Tensor& m = val(n.a);
        const Tensor& x = val(n.b);
        Tensor& gm = grad_slot(n.a);
        Tensor& gx = grad_slot(n.b);
        const auto cols = m.cols();
        for (std::size_t r = 0; r < m.rows(); ++r) {
          const Real gr = g[r];
          if (gr == 0) continue;
          Real* gm_row = gm.data().data() + r * cols;
          const Real* m_row = m.data().data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) {
            gm_row[c] += gr * x[c];
            gx[c] += gr * m_row[c];
          }
        }
        break;
      }
      case Op::add: {
        Tensor& ga = grad_slot(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        Tensor& gb = grad_slot(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        break;
      }
      case Op::mul: {
        const Tensor& x = val(n.a);
        const Tensor& y = val(n.b);
        Tensor& ga = grad_slot(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        Tensor& gb = grad_slot(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
        break;
      }
      case Op::scale: {
        Tensor& ga = grad_slot(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.scalar;
        break;
      }
      case Op::tanh: {
        Tensor& ga = grad_slot(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (Real(1) - out[i] * out[i]);
        break;
      }
      case Op::sigmoid: {
        Tensor& ga = grad_slot(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * out[i] * (Real(1) - out[i]);
        break;
      }
      case Op::softmax: {
        Real dot = 0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * out[i];
        Tensor& ga = grad_slot(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += out[i] * (g[i] - dot);
        break;
      }
      case Op::cross_entropy: {
        const Real p = val(n.a)[n.index];
        // The floor clamp is flat, so no gradient flows below it.
        if (p >= n.scalar) grad_slot(n.a)[n.index] += -g[0] / p;
        break;
      }
      case Op::column: {
        Tensor& gm = grad_slot(n.a);
        for (std::size_t r = 0; r < g.size(); ++r) gm.at(r, n.index) += g[r];
        break;
      }
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
}

}  // namespace mmlm
