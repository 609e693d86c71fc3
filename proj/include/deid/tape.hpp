#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "deid/crf.hpp"
#include "deid/rng.hpp"
#include "deid/tensor.hpp"

namespace deid {

using NodeId = uint32_t;
inline constexpr NodeId kNoNode = 0xffffffffu;

// Recorded computation graph over vector-valued nodes. Values live in one
// contiguous pool; gradients in a mirror pool allocated lazily by backward().
// Parameter gradients accumulate into Param::grad, so callers zero those
// between backward passes (sgd_step does this after each update).
class Tape {
 public:
  enum class Op : uint8_t {
    Input,     // constant vector
    ParamVec,  // whole parameter tensor viewed as a vector
    Row,       // one row of a (row-sparse) parameter matrix
    Affine,    // W·x (+ U·h) (+ b)
    Sigmoid,
    Tanh,
    Mul,       // elementwise
    Add,       // elementwise
    Concat,
    Slice,
    Dropout,   // inverted dropout with a recorded mask
    Sum,       // scalar sum of one vector
    CrfNll,    // scalar CRF negative log-likelihood over emission nodes
  };

  void reset() {
    nodes_.clear();
    vals_.clear();
    grads_.clear();
    extra_.clear();
    masks_.clear();
  }

  size_t size() const { return nodes_.size(); }

  std::span<const double> value(NodeId id) const {
    check_id(id);
    const Node& n = nodes_[id];
    return {vals_.data() + n.off, n.len};
  }

  std::span<const double> grad(NodeId id) const {
    check_id(id);
    require(grads_.size() == vals_.size(), "Tape::grad: backward has not run");
    const Node& n = nodes_[id];
    return {grads_.data() + n.off, n.len};
  }

  NodeId input(std::span<const double> v) {
    NodeId id = push(Op::Input, v.size());
    std::copy(v.begin(), v.end(), val_ptr(id));
    return id;
  }

  NodeId zeros(size_t len) { return push(Op::Input, len); }

  NodeId param_vec(const Param& p) {
    NodeId id = push(Op::ParamVec, p.size());
    nodes_[id].p = &p;
    std::copy(p.value.v.begin(), p.value.v.end(), val_ptr(id));
    return id;
  }

  NodeId row(const Param& table, size_t r) {
    if (r >= table.value.rows()) [[unlikely]]
      throw Error("Tape::row: row index out of range for " + table.name);
    NodeId id = push(Op::Row, table.value.cols());
    nodes_[id].p = &table;
    nodes_[id].aux = static_cast<uint32_t>(r);
    const double* src = table.value.row(r);
    std::copy(src, src + table.value.cols(), val_ptr(id));
    return id;
  }

  /// y = W·x (+ U·h) (+ b). Pass kNoNode / nullptr to drop a term.
  NodeId affine(const Param& W, NodeId x, const Param* U = nullptr,
                NodeId h = kNoNode, const Param* b = nullptr) {
    check_id(x);
    size_t out = W.value.rows();
    if (W.value.cols() != nodes_[x].len) [[unlikely]]
      throw Error("affine: W columns (" + std::to_string(W.value.cols()) +
                  ") != input length (" + std::to_string(nodes_[x].len) + ") for " + W.name);
    if (U) {
      check_id(h);
      if (U->value.rows() != out) [[unlikely]]
        throw Error("affine: U rows != W rows for " + U->name);
      if (U->value.cols() != nodes_[h].len) [[unlikely]]
        throw Error("affine: U columns != h length for " + U->name);
    }
    if (b && b->size() != out) [[unlikely]]
      throw Error("affine: bias length mismatch for " + b->name);
    NodeId id = push(Op::Affine, out);
    Node& n = nodes_[id];
    n.a = x;
    n.b = U ? h : kNoNode;
    n.p = &W;
    n.p2 = U;
    n.p3 = b;
    double* y = val_ptr(id);
    const double* xv = val_ptr(x);
    for (size_t r = 0; r < out; ++r) y[r] = dot(W.value.row(r), xv, W.value.cols());
    if (U) {
      const double* hv = val_ptr(h);
      for (size_t r = 0; r < out; ++r) y[r] += dot(U->value.row(r), hv, U->value.cols());
    }
    if (b)
      for (size_t r = 0; r < out; ++r) y[r] += b->value.v[r];
    return id;
  }

  NodeId sigmoid(NodeId x) {
    return unary(Op::Sigmoid, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  }

  NodeId tanh_(NodeId x) {
    return unary(Op::Tanh, x, [](double v) { return std::tanh(v); });
  }

  NodeId mul(NodeId a, NodeId b) { return binary(Op::Mul, a, b); }
  NodeId add(NodeId a, NodeId b) { return binary(Op::Add, a, b); }

  NodeId concat(std::span<const NodeId> parts) {
    require(!parts.empty(), "concat: no inputs");
    size_t len = 0;
    for (NodeId c : parts) {
      check_id(c);
      len += nodes_[c].len;
    }
    NodeId id = push(Op::Concat, len);
    nodes_[id].aux = static_cast<uint32_t>(extra_.size());
    nodes_[id].aux2 = static_cast<uint32_t>(parts.size());
    for (NodeId c : parts) extra_.push_back(c);
    double* y = val_ptr(id);
    for (NodeId c : parts) {
      const Node& cn = nodes_[c];
      std::copy(vals_.begin() + cn.off, vals_.begin() + cn.off + cn.len, y);
      y += cn.len;
    }
    return id;
  }

  NodeId slice(NodeId x, size_t off, size_t len) {
    check_id(x);
    require(off + len <= nodes_[x].len, "slice: out of range");
    NodeId id = push(Op::Slice, len);
    nodes_[id].a = x;
    nodes_[id].aux = static_cast<uint32_t>(off);
    const double* xv = val_ptr(x) + off;
    std::copy(xv, xv + len, val_ptr(id));
    return id;
  }

  /// Inverted dropout: each element zeroed with probability p, survivors
  /// scaled by 1/(1-p). Identity when not training or p == 0.
  NodeId dropout(NodeId x, double p, Rng& rng, bool training) {
    check_id(x);
    require(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
    if (!training || p == 0.0) return x;
    size_t len = nodes_[x].len;
    NodeId id = push(Op::Dropout, len);
    nodes_[id].a = x;
    nodes_[id].aux = static_cast<uint32_t>(masks_.size());
    double keep_scale = 1.0 / (1.0 - p);
    const double* xv = val_ptr(x);
    double* y = val_ptr(id);
    for (size_t i = 0; i < len; ++i) {
      double m = (rng.uniform01() < p) ? 0.0 : keep_scale;
      masks_.push_back(m);
      y[i] = xv[i] * m;
    }
    return id;
  }

  NodeId sum(NodeId x) {
    check_id(x);
    NodeId id = push(Op::Sum, 1);
    nodes_[id].a = x;
    const double* xv = val_ptr(x);
    double s = 0;
    for (size_t i = 0; i < nodes_[x].len; ++i) s += xv[i];
    *val_ptr(id) = s;
    return id;
  }

  /// CRF negative log-likelihood of `gold` given per-token emission nodes and
  /// the transition parameter. Backward distributes (marginals - indicators)
  /// to the emission nodes and expected-minus-observed counts to `trans`.
  NodeId crf_nll(std::span<const NodeId> emissions, const Param& trans,
                 std::span<const int> gold) {
    require(!emissions.empty(), "crf_nll: empty sequence");
    require(emissions.size() == gold.size(), "crf_nll: gold length mismatch");
    size_t L = nodes_[emissions[0]].len;
    for (NodeId e : emissions) {
      check_id(e);
      require(nodes_[e].len == L, "crf_nll: ragged emission widths");
    }
    require(trans.value.rows() == L + 2 && trans.value.cols() == L + 2,
            "crf_nll: transition shape");
    for (int g : gold)
      require(g >= 0 && static_cast<size_t>(g) < L, "crf_nll: gold label out of range");
    NodeId id = push(Op::CrfNll, 1);
    Node& n = nodes_[id];
    n.p = &trans;
    n.aux = static_cast<uint32_t>(extra_.size());
    n.aux2 = static_cast<uint32_t>(emissions.size());
    for (NodeId e : emissions) extra_.push_back(e);
    for (int g : gold) extra_.push_back(static_cast<uint32_t>(g));
    Tensor em = gather_emissions(n);
    *val_ptr(id) = deid::crf_nll(em, trans.value, gold);
    return id;
  }

  /// Reverse-mode sweep from a scalar loss node. Parameter gradients
  /// accumulate into Param::grad; node gradients are available via grad().
  void backward(NodeId loss) {
    require(!nodes_.empty(), "backward: empty tape");
    check_id(loss);
    require(nodes_[loss].len == 1, "backward: loss must be scalar");
    grads_.assign(vals_.size(), 0.0);
    grads_[nodes_[loss].off] = 1.0;
    for (size_t k = nodes_.size(); k-- > 0;) {
      const Node& n = nodes_[k];
      const double* gy = grads_.data() + n.off;
      switch (n.op) {
        case Op::Input:
          break;
        case Op::ParamVec:
          for (size_t i = 0; i < n.len; ++i) n.p->grad.v[i] += gy[i];
          if (n.p->row_sparse) touch_all(*n.p);
          break;
        case Op::Row: {
          double* g = n.p->grad.row(n.aux);
          for (size_t i = 0; i < n.len; ++i) g[i] += gy[i];
          if (n.p->row_sparse) n.p->touched.push_back(n.aux);
          break;
        }
        case Op::Affine: {
          const double* xv = vals_.data() + nodes_[n.a].off;
          double* gx = grads_.data() + nodes_[n.a].off;
          size_t in = n.p->value.cols();
          for (size_t r = 0; r < n.len; ++r) {
            axpy(gy[r], n.p->value.row(r), gx, in);
            axpy(gy[r], xv, n.p->grad.row(r), in);
          }
          if (n.p2) {
            const double* hv = vals_.data() + nodes_[n.b].off;
            double* gh = grads_.data() + nodes_[n.b].off;
            size_t hin = n.p2->value.cols();
            for (size_t r = 0; r < n.len; ++r) {
              axpy(gy[r], n.p2->value.row(r), gh, hin);
              axpy(gy[r], hv, n.p2->grad.row(r), hin);
            }
          }
          if (n.p3)
            for (size_t r = 0; r < n.len; ++r) n.p3->grad.v[r] += gy[r];
          break;
        }
        case Op::Sigmoid: {
          const double* yv = vals_.data() + n.off;
          double* gx = grads_.data() + nodes_[n.a].off;
          for (size_t i = 0; i < n.len; ++i) gx[i] += gy[i] * yv[i] * (1.0 - yv[i]);
          break;
        }
        case Op::Tanh: {
          const double* yv = vals_.data() + n.off;
          double* gx = grads_.data() + nodes_[n.a].off;
          for (size_t i = 0; i < n.len; ++i) gx[i] += gy[i] * (1.0 - yv[i] * yv[i]);
          break;
        }
        case Op::Mul: {
          const double* av = vals_.data() + nodes_[n.a].off;
          const double* bv = vals_.data() + nodes_[n.b].off;
          double* ga = grads_.data() + nodes_[n.a].off;
          double* gb = grads_.data() + nodes_[n.b].off;
          for (size_t i = 0; i < n.len; ++i) {
            ga[i] += gy[i] * bv[i];
            gb[i] += gy[i] * av[i];
          }
          break;
        }
        case Op::Add: {
          double* ga = grads_.data() + nodes_[n.a].off;
          double* gb = grads_.data() + nodes_[n.b].off;
          for (size_t i = 0; i < n.len; ++i) {
            ga[i] += gy[i];
            gb[i] += gy[i];
          }
          break;
        }
        case Op::Concat: {
          const double* g = gy;
          for (uint32_t c = 0; c < n.aux2; ++c) {
            const Node& cn = nodes_[extra_[n.aux + c]];
            double* gc = grads_.data() + cn.off;
            for (size_t i = 0; i < cn.len; ++i) gc[i] += g[i];
            g += cn.len;
          }
          break;
        }
        case Op::Slice: {
          double* gx = grads_.data() + nodes_[n.a].off + n.aux;
          for (size_t i = 0; i < n.len; ++i) gx[i] += gy[i];
          break;
        }
        case Op::Dropout: {
          double* gx = grads_.data() + nodes_[n.a].off;
          const double* m = masks_.data() + n.aux;
          for (size_t i = 0; i < n.len; ++i) gx[i] += gy[i] * m[i];
          break;
        }
        case Op::Sum: {
          double* gx = grads_.data() + nodes_[n.a].off;
          for (size_t i = 0; i < nodes_[n.a].len; ++i) gx[i] += gy[0];
          break;
        }
        case Op::CrfNll: {
          size_t T = n.aux2;
          Tensor em = gather_emissions(n);
          size_t L = em.cols();
          std::vector<int> gold(T);
          for (size_t t = 0; t < T; ++t)
            gold[t] = static_cast<int>(extra_[n.aux + T + t]);
          Tensor d_em = Tensor::zeros({T, L});
          crf_nll_grads(em, n.p->value, gold, gy[0], &d_em, &n.p->grad);
          for (size_t t = 0; t < T; ++t) {
            double* ge = grads_.data() + nodes_[extra_[n.aux + t]].off;
            for (size_t j = 0; j < L; ++j) ge[j] += d_em.at(t, j);
          }
          break;
        }
      }
    }
  }

 private:
  struct Node {
    Op op;
    uint32_t len;
    uint32_t off;
    NodeId a = kNoNode, b = kNoNode;
    const Param* p = nullptr;
    const Param* p2 = nullptr;
    const Param* p3 = nullptr;
    uint32_t aux = 0, aux2 = 0;
  };

  void check_id(NodeId id) const {
    require(id < nodes_.size(), "tape: node id not recorded on this tape");
  }

  double* val_ptr(NodeId id) { return vals_.data() + nodes_[id].off; }

  NodeId push(Op op, size_t len) {
    Node n;
    n.op = op;
    n.len = static_cast<uint32_t>(len);
    n.off = static_cast<uint32_t>(vals_.size());
    vals_.resize(vals_.size() + len, 0.0);
    nodes_.push_back(n);
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  template <typename F>
  NodeId unary(Op op, NodeId x, F f) {
    check_id(x);
    NodeId id = push(op, nodes_[x].len);
    nodes_[id].a = x;
    const double* xv = val_ptr(x);
    double* y = val_ptr(id);
    for (size_t i = 0; i < nodes_[x].len; ++i) y[i] = f(xv[i]);
    return id;
  }

  NodeId binary(Op op, NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    require(nodes_[a].len == nodes_[b].len, "tape: elementwise length mismatch");
    NodeId id = push(op, nodes_[a].len);
    nodes_[id].a = a;
    nodes_[id].b = b;
    const double* av = val_ptr(a);
    const double* bv = val_ptr(b);
    double* y = val_ptr(id);
    size_t len = nodes_[a].len;
    for (size_t i = 0; i < len; ++i)
      y[i] = (op == Op::Mul) ? av[i] * bv[i] : av[i] + bv[i];
    return id;
  }

  Tensor gather_emissions(const Node& n) const {
    size_t T = n.aux2;
    size_t L = nodes_[extra_[n.aux]].len;
    Tensor em = Tensor::zeros({T, L});
    for (size_t t = 0; t < T; ++t) {
      const Node& e = nodes_[extra_[n.aux + t]];
      std::copy(vals_.begin() + e.off, vals_.begin() + e.off + e.len, em.row(t));
    }
    return em;
  }

  static void touch_all(const Param& p) {
    for (uint32_t r = 0; r < p.value.rows(); ++r) p.touched.push_back(r);
  }

  std::vector<Node> nodes_;
  std::vector<double> vals_, grads_;
  std::vector<uint32_t> extra_;
  std::vector<double> masks_;
};

}  // namespace deid
