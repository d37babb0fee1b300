#pragma once

// Define-by-run automatic differentiation over a generic scalar type.
//
// A GraphT<double> gives reverse-mode gradients. A GraphT<Dual> runs the same
// tape in dual arithmetic, so one backward pass yields directional
// derivatives of gradients (forward-over-reverse). That is how per-sample
// gradient Jacobians with respect to the *input* are probed without ever
// materializing them.
//
// Only smooth primitives are provided. Kinked ops (relu, abs, max) refuse to
// build: downstream sensitivity analysis differentiates through gradients,
// which would silently be wrong at kinks.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "reconbound/errors.hpp"
#include "reconbound/tensor.hpp"

namespace reconbound::ad {

using std::erf;
using std::exp;
using std::log;
using std::log1p;
using std::sqrt;
using std::tanh;

// Scalar math shared by double and Dual instantiations.
template <class S>
S sigmoid_s(const S& x) {
  if (value_of(x) >= 0.0) {
    const S e = exp(-x);
    return S(1.0) / (S(1.0) + e);
  }
  const S e = exp(x);
  return e / (S(1.0) + e);
}

template <class S>
S softplus_s(const S& x) {
  if (value_of(x) > 0.0) return x + log1p(exp(-x));
  return log1p(exp(x));
}

// Exact Gaussian-CDF form: x * Phi(x).
template <class S>
S gelu_s(const S& x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  return x * S(0.5) * (S(1.0) + erf(x * S(inv_sqrt2)));
}

enum class Op {
  kInput,
  kConst,
  kAdd,
  kSub,
  kMul,
  kScale,
  kDot,
  kAffine,
  kTanh,
  kGelu,
  kSoftplus,
  kSum,
  kSumSq,
  kNorm2,
  kLogSumExp,
  kPick,
};

template <class S>
class GraphT {
 public:
  using TensorS = TensorT<S>;

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    int64_t off = 0, rows = 0, cols = 0;  // affine layout / pick index
    double c = 0.0;                       // scale factor
    TensorS value;
    TensorS adjoint;
    bool has_adjoint = false;
  };

  int input(TensorS v) { return push(Op::kInput, std::move(v)); }
  int constant(TensorS v) { return push(Op::kConst, std::move(v)); }

  int add(int a, int b) { return binary_elementwise(Op::kAdd, a, b); }
  int sub(int a, int b) { return binary_elementwise(Op::kSub, a, b); }
  int mul(int a, int b) { return binary_elementwise(Op::kMul, a, b); }

  int scale(int a, double c) {
    TensorS v = val(a);
    for (int64_t i = 0; i < v.numel(); ++i) v[i] = S(c) * v[i];
    Node n = make(Op::kScale, a, -1, std::move(v));
    n.c = c;
    return push_node(std::move(n));
  }

  int dot(int a, int b) {
    const TensorS& x = val(a);
    const TensorS& y = val(b);
    if (x.numel() != y.numel()) throw ConfigError("dot: length mismatch");
    S s(0.0);
    for (int64_t i = 0; i < x.numel(); ++i) s += x[i] * y[i];
    return push_node(make(Op::kDot, a, b, TensorS::scalar(s)));
  }

  // y = W x + b where W (rows x cols, row-major) and b (rows) live inside the
  // flat parameter node `w` starting at `off`.
  int affine(int w, int64_t off, int64_t rows, int64_t cols, int x) {
    const TensorS& wt = val(w);
    const TensorS& xt = val(x);
    if (xt.numel() != cols) throw ConfigError("affine: input length mismatch");
    if (off + rows * cols + rows > wt.numel())
      throw ConfigError("affine: parameter slice out of range");
    TensorS out = TensorS::zeros({rows});
    for (int64_t r = 0; r < rows; ++r) {
      S s = wt[off + rows * cols + r];  // bias
      const S* row = wt.data() + off + r * cols;
      for (int64_t cidx = 0; cidx < cols; ++cidx) s += row[cidx] * xt[cidx];
      out[r] = s;
    }
    Node n = make(Op::kAffine, w, x, std::move(out));
    n.off = off;
    n.rows = rows;
    n.cols = cols;
    return push_node(std::move(n));
  }

  int tanh_op(int a) { return unary(Op::kTanh, a, [](const S& x) { return tanh(x); }); }
  int gelu_op(int a) { return unary(Op::kGelu, a, [](const S& x) { return gelu_s(x); }); }
  int softplus_op(int a) {
    return unary(Op::kSoftplus, a, [](const S& x) { return softplus_s(x); });
  }

  int sum(int a) {
    const TensorS& x = val(a);
    S s(0.0);
    for (int64_t i = 0; i < x.numel(); ++i) s += x[i];
    return push_node(make(Op::kSum, a, -1, TensorS::scalar(s)));
  }

  int sum_sq(int a) {
    const TensorS& x = val(a);
    S s(0.0);
    for (int64_t i = 0; i < x.numel(); ++i) s += x[i] * x[i];
    return push_node(make(Op::kSumSq, a, -1, TensorS::scalar(s)));
  }

  int norm2_op(int a) {
    const TensorS& x = val(a);
    S s(0.0);
    for (int64_t i = 0; i < x.numel(); ++i) s += x[i] * x[i];
    return push_node(make(Op::kNorm2, a, -1, TensorS::scalar(sqrt(s))));
  }

  int logsumexp(int a) {
    const TensorS& x = val(a);
    if (x.numel() == 0) throw ConfigError("logsumexp: empty input");
    double m = value_of(x[0]);
    for (int64_t i = 1; i < x.numel(); ++i) m = std::max(m, value_of(x[i]));
    S s(0.0);
    for (int64_t i = 0; i < x.numel(); ++i) s += exp(x[i] - S(m));
    return push_node(make(Op::kLogSumExp, a, -1, TensorS::scalar(log(s) + S(m))));
  }

  int pick(int a, int64_t index) {
    const TensorS& x = val(a);
    if (index < 0 || index >= x.numel()) throw ConfigError("pick: index out of range");
    Node n = make(Op::kPick, a, -1, TensorS::scalar(x[index]));
    n.off = index;
    return push_node(std::move(n));
  }

  int relu(int) { throw NonSmoothError("relu is not differentiable at 0; not supported"); }
  int abs_op(int) { throw NonSmoothError("abs is not differentiable at 0; not supported"); }
  int max_op(int, int) { throw NonSmoothError("max is not differentiable on ties; not supported"); }

  const TensorS& val(int id) const { return nodes_.at(static_cast<size_t>(id)).value; }

  // Reverse pass from a scalar output. Adjoints of all nodes become available;
  // read them off input nodes afterwards.
  void backward(int out) {
    Node& o = nodes_.at(static_cast<size_t>(out));
    if (o.value.numel() != 1) throw ConfigError("backward: output must be scalar");
    for (Node& n : nodes_) n.has_adjoint = false;
    touch(out).fill(S(0.0));
    touch(out)[0] = S(1.0);
    for (int id = out; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.has_adjoint) continue;
      propagate(n);
    }
  }

  const TensorS& adjoint(int id) const {
    const Node& n = nodes_.at(static_cast<size_t>(id));
    if (!n.has_adjoint) throw NumericError("adjoint requested before backward reached node");
    return n.adjoint;
  }

  bool has_adjoint(int id) const { return nodes_.at(static_cast<size_t>(id)).has_adjoint; }

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;

  Node make(Op op, int a, int b, TensorS v) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.value = std::move(v);
    return n;
  }

  int push(Op op, TensorS v) { return push_node(make(op, -1, -1, std::move(v))); }

  int push_node(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size() - 1);
  }

  template <class F>
  int unary(Op op, int a, F f) {
    TensorS v = val(a);
    for (int64_t i = 0; i < v.numel(); ++i) v[i] = f(v[i]);
    return push_node(make(op, a, -1, std::move(v)));
  }

  int binary_elementwise(Op op, int a, int b) {
    const TensorS& x = val(a);
    const TensorS& y = val(b);
    if (!x.same_shape(y)) throw ConfigError("elementwise op: shape mismatch");
    TensorS v = TensorS::zeros(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) {
      switch (op) {
        case Op::kAdd: v[i] = x[i] + y[i]; break;
        case Op::kSub: v[i] = x[i] - y[i]; break;
        case Op::kMul: v[i] = x[i] * y[i]; break;
        default: throw ConfigError("not an elementwise op");
      }
    }
    return push_node(make(op, a, b, std::move(v)));
  }

  TensorS& touch(int id) {
    Node& n = nodes_.at(static_cast<size_t>(id));
    if (!n.has_adjoint) {
      n.adjoint = TensorS::zeros(n.value.shape());
      n.has_adjoint = true;
    }
    return n.adjoint;
  }

  void propagate(Node& n) {
    const TensorS& g = n.adjoint;
    switch (n.op) {
      case Op::kInput:
      case Op::kConst:
        break;
      case Op::kAdd: {
        TensorS& ga = touch(n.a);
        TensorS& gb = touch(n.b);
        for (int64_t i = 0; i < g.numel(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        TensorS& ga = touch(n.a);
        TensorS& gb = touch(n.b);
        for (int64_t i = 0; i < g.numel(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::kMul: {
        const TensorS& x = val(n.a);
        const TensorS& y = val(n.b);
        TensorS& ga = touch(n.a);
        TensorS& gb = touch(n.b);
        for (int64_t i = 0; i < g.numel(); ++i) {
          ga[i] += g[i] * y[i];
          gb[i] += g[i] * x[i];
        }
        break;
      }
      case Op::kScale: {
        TensorS& ga = touch(n.a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += S(n.c) * g[i];
        break;
      }
      case Op::kDot: {
        const TensorS& x = val(n.a);
        const TensorS& y = val(n.b);
        TensorS& ga = touch(n.a);
        TensorS& gb = touch(n.b);
        const S gs = g[0];
        for (int64_t i = 0; i < x.numel(); ++i) {
          ga[i] += gs * y[i];
          gb[i] += gs * x[i];
        }
        break;
      }
      case Op::kAffine: {
        const TensorS& wt = val(n.a);
        const TensorS& xt = val(n.b);
        TensorS& gw = touch(n.a);
        TensorS& gx = touch(n.b);
        for (int64_t r = 0; r < n.rows; ++r) {
          const S gr = g[r];
          const S* wrow = wt.data() + n.off + r * n.cols;
          S* gwrow = gw.data() + n.off + r * n.cols;
          for (int64_t cidx = 0; cidx < n.cols; ++cidx) {
            gwrow[cidx] += gr * xt[cidx];
            gx[cidx] += gr * wrow[cidx];
          }
          gw[n.off + n.rows * n.cols + r] += gr;  // bias
        }
        break;
      }
      case Op::kTanh: {
        TensorS& ga = touch(n.a);
        for (int64_t i = 0; i < g.numel(); ++i)
          ga[i] += g[i] * (S(1.0) - n.value[i] * n.value[i]);
        break;
      }
      case Op::kGelu: {
        const TensorS& x = val(n.a);
        TensorS& ga = touch(n.a);
        constexpr double inv_sqrt2 = 0.7071067811865475244;
        constexpr double inv_sqrt2pi = 0.3989422804014326779;
        for (int64_t i = 0; i < g.numel(); ++i) {
          const S phi = S(0.5) * (S(1.0) + erf(x[i] * S(inv_sqrt2)));
          const S dens = S(inv_sqrt2pi) * exp(S(-0.5) * x[i] * x[i]);
          ga[i] += g[i] * (phi + x[i] * dens);
        }
        break;
      }
      case Op::kSoftplus: {
        const TensorS& x = val(n.a);
        TensorS& ga = touch(n.a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * sigmoid_s(x[i]);
        break;
      }
      case Op::kSum: {
        TensorS& ga = touch(n.a);
        const S gs = g[0];
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += gs;
        break;
      }
      case Op::kSumSq: {
        const TensorS& x = val(n.a);
        TensorS& ga = touch(n.a);
        const S gs = g[0];
        for (int64_t i = 0; i < x.numel(); ++i) ga[i] += S(2.0) * gs * x[i];
        break;
      }
      case Op::kNorm2: {
        const TensorS& x = val(n.a);
        TensorS& ga = touch(n.a);
        if (value_of(n.value[0]) > 0.0) {
          const S inv = S(1.0) / n.value[0];
          const S gs = g[0];
          for (int64_t i = 0; i < x.numel(); ++i) ga[i] += gs * x[i] * inv;
        }
        break;
      }
      case Op::kLogSumExp: {
        const TensorS& x = val(n.a);
        TensorS& ga = touch(n.a);
        const S gs = g[0];
        for (int64_t i = 0; i < x.numel(); ++i) ga[i] += gs * exp(x[i] - n.value[0]);
        break;
      }
      case Op::kPick: {
        TensorS& ga = touch(n.a);
        ga[n.off] += g[0];
        break;
      }
    }
  }
};

using Graph = GraphT<double>;
using DualGraph = GraphT<Dual>;

// A differentiable scalar program: any type exposing
//   template <class S> int build(GraphT<S>&, int w_id, int x_id) const
// returning the id of a scalar loss node. Labels and hyperparameters are
// baked into the program object.

template <class Prog>
double loss_value(const Prog& prog, const Tensor& w, const Tensor& x) {
  Graph g;
  const int wi = g.input(w);
  const int xi = g.input(x);
  return g.val(prog.build(g, wi, xi))[0];
}

// Gradient with respect to the parameters.
template <class Prog>
Tensor grad_w(const Prog& prog, const Tensor& w, const Tensor& x) {
  Graph g;
  const int wi = g.input(w);
  const int xi = g.input(x);
  g.backward(prog.build(g, wi, xi));
  Tensor out = g.has_adjoint(wi) ? g.adjoint(wi) : Tensor::zeros(w.shape());
  if (!out.all_finite()) throw NumericError("non-finite gradient");
  return out;
}

// Gradient with respect to the input.
template <class Prog>
Tensor grad_x(const Prog& prog, const Tensor& w, const Tensor& x) {
  Graph g;
  const int wi = g.input(w);
  const int xi = g.input(x);
  g.backward(prog.build(g, wi, xi));
  return g.has_adjoint(xi) ? g.adjoint(xi) : Tensor::zeros(x.shape());
}

// Forward-mode directional derivative of an S-generic vector function:
// returns J_fn(at) * v.
template <class Fn>
Tensor jvp(const Fn& fn, const Tensor& at, const Tensor& v) {
  const DualTensor out = fn(duals_of(at, v));
  Tensor t = tangents_of(out);
  if (!t.all_finite()) throw NumericError("non-finite jvp");
  return t;
}

// Both dual gradients from one tape: seed tangents on w and/or x, run the
// backward pass in dual arithmetic, read value+tangent of each adjoint.
template <class Prog>
void dual_grads(const Prog& prog, const DualTensor& w, const DualTensor& x,
                DualTensor* gw, DualTensor* gx) {
  DualGraph g;
  const int wi = g.input(w);
  const int xi = g.input(x);
  g.backward(prog.build(g, wi, xi));
  if (gw) *gw = g.has_adjoint(wi) ? g.adjoint(wi) : DualTensor::zeros(w.shape());
  if (gx) *gx = g.has_adjoint(xi) ? g.adjoint(xi) : DualTensor::zeros(x.shape());
}

// d/de grad_w(w, x + e v) at e = 0: the input Jacobian of the parameter
// gradient applied to v.
template <class Prog>
Tensor input_grad_jvp(const Prog& prog, const Tensor& w, const Tensor& x,
                      const Tensor& v) {
  DualTensor gw;
  dual_grads(prog, duals_of(w), duals_of(x, v), &gw, nullptr);
  Tensor t = tangents_of(gw);
  if (!t.all_finite()) throw NumericError("non-finite input_grad_jvp");
  return t;
}

// Transposed action of the same Jacobian: for J = d(grad_w)/dx, returns J^T u.
// Mixed partials commute, so seeding the tangent on w and reading the tangent
// of the input gradient gives the transpose without a second reverse pass.
template <class Prog>
Tensor input_grad_vjp(const Prog& prog, const Tensor& w, const Tensor& x,
                      const Tensor& u) {
  DualTensor gx;
  dual_grads(prog, duals_of(w, u), duals_of(x), nullptr, &gx);
  Tensor t = tangents_of(gx);
  if (!t.all_finite()) throw NumericError("non-finite input_grad_vjp");
  return t;
}

// Hessian-vector product in the parameters: d/de grad_w(w + e v, x) at e = 0.
template <class Prog>
Tensor hessian_vec(const Prog& prog, const Tensor& w, const Tensor& x,
                   const Tensor& v) {
  DualTensor gw;
  dual_grads(prog, duals_of(w, v), duals_of(x), &gw, nullptr);
  Tensor t = tangents_of(gw);
  if (!t.all_finite()) throw NumericError("non-finite hessian_vec");
  return t;
}

}  // namespace reconbound::ad
