// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense rank <= 2 tensors.
//
// A Graph is a tape: nodes are appended in evaluation order, so creation
// order is a valid topological order and backward simply walks the tape in
// reverse. Node values and gradients live in two flat pools owned by the
// graph; a Var is only an index into the tape and is meaningless outside
// the graph that produced it.
//
// Parameters enter the tape through Graph::param(), which copies the current
// value once per graph and, on backward, adds the accumulated gradient into
// Parameter::grad (+= semantics, zeroed explicitly by the optimizer).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hera/errors.hpp"
#include "hera/tensor.hpp"

namespace hera {

enum class Op : std::uint8_t {
  Constant,
  Param,
  MatVec,
  Add,
  Sigmoid,
  Tanh,
  Hadamard,
  Concat,
  Slice,
  LogSoftmax,
  Exp,
  Neg,
  Sum,
};

inline std::string_view op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Param: return "param";
    case Op::MatVec: return "matvec";
    case Op::Add: return "add";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Hadamard: return "hadamard";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::LogSoftmax: return "log_softmax";
    case Op::Exp: return "exp";
    case Op::Neg: return "neg";
    case Op::Sum: return "sum";
  }
  return "unknown";
}

struct Var {
  static constexpr std::uint32_t kInvalid = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kInvalid;
  bool valid() const noexcept { return id != kInvalid; }
};

class Graph {
 public:
  Graph() { nodes_.reserve(512); values_.reserve(8192); }

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // -- leaves ---------------------------------------------------------------

  Var constant(std::span<const double> values, std::size_t rows, std::size_t cols) {
    if (values.size() != rows * cols) {
      throw DimensionError("constant: " + std::to_string(values.size()) + " values for shape " +
                           shape_string(rows, cols));
    }
    Var v = push(Op::Constant, rows, cols);
    std::copy(values.begin(), values.end(), values_.begin() + nodes_[v.id].offset);
    return v;
  }
  Var constant(std::span<const double> values) { return constant(values, values.size(), 1); }
  Var constant(const Tensor& t) { return constant(t.data, t.rows, t.cols); }
  Var scalar(double v) { return constant(std::span<const double>(&v, 1), 1, 1); }
  Var filled(std::size_t rows, std::size_t cols, double v) {
    Var out = push(Op::Constant, rows, cols);
    std::fill_n(values_.begin() + nodes_[out.id].offset, rows * cols, v);
    return out;
  }
  Var zeros(std::size_t n) { return filled(n, 1, 0.0); }

  /// Leaf bound to a trainable parameter. Repeated calls return the same
  /// node. Building a graph only reads the parameter; backward() is the one
  /// place that writes, into Parameter::grad.
  Var param(const Parameter& p) {
    auto* key = const_cast<Parameter*>(&p);
    if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return Var{it->second};
    if (p.value.size() == 0) throw DimensionError("param: parameter '" + p.name + "' is empty");
    Var v = push(Op::Param, p.value.rows, p.value.cols);
    nodes_[v.id].param = key;
    std::copy(p.value.data.begin(), p.value.data.end(), values_.begin() + nodes_[v.id].offset);
    param_nodes_.emplace(key, v.id);
    return v;
  }

  // -- primitives -----------------------------------------------------------

  Var matvec(Var m, Var x) {
    const Node& nm = node(m);
    const Node& nx = node(x);
    if (nx.cols != 1 || nm.cols != nx.rows) {
      throw DimensionError("matvec: matrix " + shape_string(nm.rows, nm.cols) + " times " +
                           shape_string(nx.rows, nx.cols));
    }
    const std::size_t rows = nm.rows, cols = nm.cols;
    Var out = push(Op::MatVec, rows, 1, m, x);
    const double* pm = data(m);
    const double* px = data(x);
    double* po = mutable_data(out);
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      const double* row = pm + r * cols;
      for (std::size_t c = 0; c < cols; ++c) acc += row[c] * px[c];
      po[r] = acc;
    }
    return out;
  }

  Var add(Var a, Var b) {
    check_same("add", a, b);
    Var out = push(Op::Add, node(a).rows, node(a).cols, a, b);
    binary_apply(out, a, b, [](double x, double y) { return x + y; });
    return out;
  }

  Var hadamard(Var a, Var b) {
    check_same("hadamard", a, b);
    Var out = push(Op::Hadamard, node(a).rows, node(a).cols, a, b);
    binary_apply(out, a, b, [](double x, double y) { return x * y; });
    return out;
  }

  Var sigmoid(Var a) {
    Var out = push(Op::Sigmoid, node(a).rows, node(a).cols, a);
    unary_apply(out, a, [](double x) { return stable_sigmoid(x); });
    return out;
  }

  Var tanh(Var a) {
    Var out = push(Op::Tanh, node(a).rows, node(a).cols, a);
    unary_apply(out, a, [](double x) { return std::tanh(x); });
    return out;
  }

  Var exp(Var a) {
    Var out = push(Op::Exp, node(a).rows, node(a).cols, a);
    unary_apply(out, a, [](double x) { return std::exp(x); });
    return out;
  }

  Var neg(Var a) {
    Var out = push(Op::Neg, node(a).rows, node(a).cols, a);
    unary_apply(out, a, [](double x) { return -x; });
    return out;
  }

  Var sum(Var a) {
    const std::size_t n = node(a).rows * node(a).cols;
    Var out = push(Op::Sum, 1, 1, a);
    const double* pa = data(a);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += pa[i];
    mutable_data(out)[0] = acc;
    return out;
  }

  Var log_softmax(Var a) {
    const Node& na = node(a);
    if (na.cols != 1 || na.rows == 0) {
      throw DimensionError("log_softmax: expects a non-empty vector, got " + shape_string(na.rows, na.cols));
    }
    const std::size_t n = na.rows;
    Var out = push(Op::LogSoftmax, n, 1, a);
    const double* pa = data(a);
    double* po = mutable_data(out);
    const std::size_t top = static_cast<std::size_t>(std::max_element(pa, pa + n) - pa);
    const double mx = pa[top];
    double rest = 0.0;  // the max term contributes exactly 1; log1p keeps small tails accurate
    for (std::size_t i = 0; i < n; ++i) {
      if (i != top) rest += std::exp(pa[i] - mx);
    }
    const double tail = std::log1p(rest);
    for (std::size_t i = 0; i < n; ++i) po[i] = (pa[i] - mx) - tail;
    return out;
  }

  /// Contiguous range of the flattened input, returned as a vector. Row k of
  /// a matrix is slice(m, k * cols, cols).
  Var slice(Var a, std::size_t offset, std::size_t length) {
    const Node& na = node(a);
    const std::size_t n = na.rows * na.cols;
    if (length == 0 || offset + length > n) {
      throw DimensionError("slice: range [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                           ") outside " + shape_string(na.rows, na.cols));
    }
    Var out = push(Op::Slice, length, 1, a);
    nodes_[out.id].aux0 = static_cast<std::uint32_t>(offset);
    nodes_[out.id].aux1 = static_cast<std::uint32_t>(length);
    std::copy_n(data(a) + offset, length, mutable_data(out));
    return out;
  }

  Var concat(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    std::size_t total = 0;
    for (Var p : parts) {
      const Node& np = node(p);
      if (np.cols != 1) throw DimensionError("concat: input " + shape_string(np.rows, np.cols) + " is not a vector");
      total += np.rows;
    }
    Var out = push(Op::Concat, total, 1);
    nodes_[out.id].aux0 = static_cast<std::uint32_t>(links_.size());
    nodes_[out.id].aux1 = static_cast<std::uint32_t>(parts.size());
    std::size_t at = 0;
    for (Var p : parts) {
      links_.push_back(p.id);
      const std::size_t n = node(p).rows;
      std::copy_n(data(p), n, mutable_data(out) + at);
      at += n;
    }
    return out;
  }
  Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

  /// Generic dispatch for the attribute-free primitives.
  Var apply(Op op, std::span<const Var> in) {
    auto arity = [&](std::size_t n) {
      if (in.size() != n) {
        throw DimensionError(std::string(op_name(op)) + ": expects " + std::to_string(n) + " inputs, got " +
                             std::to_string(in.size()));
      }
    };
    switch (op) {
      case Op::MatVec: arity(2); return matvec(in[0], in[1]);
      case Op::Add: arity(2); return add(in[0], in[1]);
      case Op::Hadamard: arity(2); return hadamard(in[0], in[1]);
      case Op::Sigmoid: arity(1); return sigmoid(in[0]);
      case Op::Tanh: arity(1); return tanh(in[0]);
      case Op::Exp: arity(1); return exp(in[0]);
      case Op::Neg: arity(1); return neg(in[0]);
      case Op::Sum: arity(1); return sum(in[0]);
      case Op::LogSoftmax: arity(1); return log_softmax(in[0]);
      case Op::Concat: return concat(in);
      case Op::Constant:
      case Op::Param:
      case Op::Slice: break;
    }
    throw ContractError(std::string(op_name(op)) + ": needs attributes, use the dedicated builder");
  }

  // -- composites (not primitives) -----------------------------------------

  Var sub(Var a, Var b) { return add(a, neg(b)); }
  Var scale(Var a, double c) { return hadamard(a, filled(node(a).rows, node(a).cols, c)); }
  Var add_scalar(Var a, double c) { return add(a, filled(node(a).rows, node(a).cols, c)); }
  /// 1 - a, elementwise.
  Var one_minus(Var a) { return add_scalar(neg(a), 1.0); }
  Var sum_all(std::span<const Var> scalars) {
    if (scalars.size() == 1) return scalars[0];
    return sum(concat(scalars));
  }

  // -- inspection -------------------------------------------------------------

  std::size_t rows(Var v) const { return node(v).rows; }
  std::size_t cols(Var v) const { return node(v).cols; }
  std::size_t size() const noexcept { return nodes_.size(); }
  Op op(Var v) const { return node(v).op; }

  std::span<const double> value(Var v) const {
    const Node& n = node(v);
    return {values_.data() + n.offset, n.rows * n.cols};
  }
  double scalar_value(Var v) const {
    if (!(node(v).rows == 1 && node(v).cols == 1)) throw ContractError("scalar_value: node is not scalar");
    return values_[node(v).offset];
  }
  /// Gradient of the last backward root with respect to this node.
  std::span<const double> grad(Var v) const {
    const Node& n = node(v);
    if (grads_.size() < values_.size()) return {};
    return {grads_.data() + n.offset, n.rows * n.cols};
  }

  /// Scales the input gradients produced by one primitive. Test hook for
  /// mutation checks of the gradient verifier; 1.0 disables it.
  void inject_backward_fault(Op op, double scale) {
    fault_op_ = op;
    fault_scale_ = scale;
  }

  // -- backward ---------------------------------------------------------------

  void backward(Var root) {
    const Node& nr = node(root);
    if (nr.rows != 1 || nr.cols != 1) {
      throw ContractError("backward: root must be scalar, got " + shape_string(nr.rows, nr.cols));
    }
    grads_.assign(values_.size(), 0.0);
    grads_[nr.offset] = 1.0;
    for (std::uint32_t id = root.id + 1; id-- > 0;) backward_node(id);
    for (const auto& [p, id] : param_nodes_) {
      if (p->frozen || id > root.id) continue;
      const Node& n = nodes_[id];
      const double* g = grads_.data() + n.offset;
      for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad.data[i] += g[i];
    }
  }

  static double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

 private:
  struct Node {
    Op op = Op::Constant;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::size_t offset = 0;
    std::uint32_t a = Var::kInvalid;
    std::uint32_t b = Var::kInvalid;
    std::uint32_t aux0 = 0;
    std::uint32_t aux1 = 0;
    Parameter* param = nullptr;
  };

  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw ContractError("graph: invalid node reference");
    return nodes_[v.id];
  }

  Var push(Op op, std::size_t rows, std::size_t cols, Var a = {}, Var b = {}) {
    Node n;
    n.op = op;
    n.rows = static_cast<std::uint32_t>(rows);
    n.cols = static_cast<std::uint32_t>(cols);
    n.offset = values_.size();
    n.a = a.id;
    n.b = b.id;
    values_.resize(values_.size() + rows * cols);
    nodes_.push_back(n);
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  const double* data(Var v) const { return values_.data() + nodes_[v.id].offset; }
  double* mutable_data(Var v) { return values_.data() + nodes_[v.id].offset; }

  void check_same(std::string_view what, Var a, Var b) const {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.rows != nb.rows || na.cols != nb.cols) {
      throw DimensionError(std::string(what) + ": shapes " + shape_string(na.rows, na.cols) + " and " +
                           shape_string(nb.rows, nb.cols) + " differ");
    }
  }

  template <typename F>
  void unary_apply(Var out, Var a, F f) {
    const std::size_t n = nodes_[out.id].rows * nodes_[out.id].cols;
    const double* pa = data(a);
    double* po = mutable_data(out);
    for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i]);
  }

  template <typename F>
  void binary_apply(Var out, Var a, Var b, F f) {
    const std::size_t n = nodes_[out.id].rows * nodes_[out.id].cols;
    const double* pa = data(a);
    const double* pb = data(b);
    double* po = mutable_data(out);
    for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
  }

  void backward_node(std::uint32_t id) {
    const Node& n = nodes_[id];
    if (n.op == Op::Constant || n.op == Op::Param) return;
    const std::size_t len = static_cast<std::size_t>(n.rows) * n.cols;
    const double* g = grads_.data() + n.offset;
    bool any = false;
    for (std::size_t i = 0; i < len && !any; ++i) any = g[i] != 0.0;
    if (!any) return;
    const double s = (n.op == fault_op_) ? fault_scale_ : 1.0;
    const double* y = values_.data() + n.offset;
    auto in_grad = [&](std::uint32_t in) { return grads_.data() + nodes_[in].offset; };
    auto in_val = [&](std::uint32_t in) { return values_.data() + nodes_[in].offset; };

    switch (n.op) {
      case Op::MatVec: {
        const Node& nm = nodes_[n.a];
        const std::size_t rows = nm.rows, cols = nm.cols;
        const double* m = in_val(n.a);
        const double* x = in_val(n.b);
        double* gm = in_grad(n.a);
        double* gx = in_grad(n.b);
        for (std::size_t r = 0; r < rows; ++r) {
          const double gr = s * g[r];
          if (gr == 0.0) continue;
          double* gmr = gm + r * cols;
          const double* mr = m + r * cols;
          for (std::size_t c = 0; c < cols; ++c) {
            gmr[c] += gr * x[c];
            gx[c] += gr * mr[c];
          }
        }
        break;
      }
      case Op::Add: {
        double* ga = in_grad(n.a);
        double* gb = in_grad(n.b);
        for (std::size_t i = 0; i < len; ++i) {
          ga[i] += s * g[i];
          gb[i] += s * g[i];
        }
        break;
      }
      case Op::Hadamard: {
        const double* a = in_val(n.a);
        const double* b = in_val(n.b);
        double* ga = in_grad(n.a);
        double* gb = in_grad(n.b);
        for (std::size_t i = 0; i < len; ++i) {
          ga[i] += s * g[i] * b[i];
          gb[i] += s * g[i] * a[i];
        }
        break;
      }
      case Op::Sigmoid: {
        double* ga = in_grad(n.a);
        for (std::size_t i = 0; i < len; ++i) ga[i] += s * g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::Tanh: {
        double* ga = in_grad(n.a);
        for (std::size_t i = 0; i < len; ++i) ga[i] += s * g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::Exp: {
        double* ga = in_grad(n.a);
        for (std::size_t i = 0; i < len; ++i) ga[i] += s * g[i] * y[i];
        break;
      }
      case Op::Neg: {
        double* ga = in_grad(n.a);
        for (std::size_t i = 0; i < len; ++i) ga[i] -= s * g[i];
        break;
      }
      case Op::Sum: {
        const Node& na = nodes_[n.a];
        double* ga = in_grad(n.a);
        const std::size_t m = static_cast<std::size_t>(na.rows) * na.cols;
        for (std::size_t i = 0; i < m; ++i) ga[i] += s * g[0];
        break;
      }
      case Op::LogSoftmax: {
        double total = 0.0;
        for (std::size_t i = 0; i < len; ++i) total += g[i];
        double* ga = in_grad(n.a);
        for (std::size_t i = 0; i < len; ++i) ga[i] += s * (g[i] - std::exp(y[i]) * total);
        break;
      }
      case Op::Slice: {
        double* ga = in_grad(n.a) + n.aux0;
        for (std::size_t i = 0; i < n.aux1; ++i) ga[i] += s * g[i];
        break;
      }
      case Op::Concat: {
        std::size_t at = 0;
        for (std::uint32_t k = 0; k < n.aux1; ++k) {
          const std::uint32_t in = links_[n.aux0 + k];
          const std::size_t m = nodes_[in].rows;
          double* gi = in_grad(in);
          for (std::size_t i = 0; i < m; ++i) gi[i] += s * g[at + i];
          at += m;
        }
        break;
      }
      case Op::Constant:
      case Op::Param: break;
    }
  }

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<std::uint32_t> links_;
  std::unordered_map<Parameter*, std::uint32_t> param_nodes_;
  Op fault_op_ = Op::Constant;
  double fault_scale_ = 1.0;
};

}  // namespace hera
