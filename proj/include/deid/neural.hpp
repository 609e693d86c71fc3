#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "deid/tape.hpp"

namespace deid {

/// Standard LSTM cell parameters (forget gate, no peepholes). Gate
/// pre-activations are fused into one (4h x in) input matrix and one
/// (4h x h) recurrent matrix; the gate order along the first axis is
/// input, forget, output, candidate. The forget-gate bias initializes to 1.
struct LstmParams {
  Param w;  // (4h x input_dim)
  Param u;  // (4h x hidden_dim)
  Param b;  // (4h)
  size_t input_dim = 0;
  size_t hidden_dim = 0;

  LstmParams() = default;
  LstmParams(const std::string& prefix, size_t in, size_t hidden, Rng& rng)
      : w(prefix + ".w", {4 * hidden, in}),
        u(prefix + ".u", {4 * hidden, hidden}),
        b(prefix + ".b", {4 * hidden}),
        input_dim(in),
        hidden_dim(hidden) {
    init_glorot(w, rng, in, hidden);
    init_glorot(u, rng, hidden, hidden);
    for (size_t i = hidden; i < 2 * hidden; ++i) b.value.v[i] = 1.0;
  }

  std::vector<Param*> params() { return {&w, &u, &b}; }
};

struct LstmState {
  NodeId h = kNoNode;
  NodeId c = kNoNode;
};

inline LstmState lstm_initial(Tape& tape, const LstmParams& p) {
  return {tape.zeros(p.hidden_dim), tape.zeros(p.hidden_dim)};
}

/// One LSTM step: sigmoid gates, tanh candidate and output.
inline LstmState lstm_step(Tape& tape, const LstmParams& p, NodeId x, LstmState prev) {
  require(tape.value(x).size() == p.input_dim, "lstm_step: input dimension mismatch");
  require(tape.value(prev.h).size() == p.hidden_dim, "lstm_step: hidden dimension mismatch");
  size_t h = p.hidden_dim;
  NodeId z = tape.affine(p.w, x, &p.u, prev.h, &p.b);
  NodeId i = tape.sigmoid(tape.slice(z, 0, h));
  NodeId f = tape.sigmoid(tape.slice(z, h, h));
  NodeId o = tape.sigmoid(tape.slice(z, 2 * h, h));
  NodeId g = tape.tanh_(tape.slice(z, 3 * h, h));
  NodeId c = tape.add(tape.mul(f, prev.c), tape.mul(i, g));
  return {tape.mul(o, tape.tanh_(c)), c};
}

/// Bidirectional LSTM: output t concatenates the forward hidden state at t
/// with the backward hidden state at t.
inline std::vector<NodeId> bilstm(Tape& tape, const LstmParams& fwd,
                                  const LstmParams& bwd,
                                  std::span<const NodeId> xs) {
  require(!xs.empty(), "bilstm: empty input sequence");
  size_t T = xs.size();
  std::vector<NodeId> hf(T), hb(T);
  LstmState s = lstm_initial(tape, fwd);
  for (size_t t = 0; t < T; ++t) {
    s = lstm_step(tape, fwd, xs[t], s);
    hf[t] = s.h;
  }
  s = lstm_initial(tape, bwd);
  for (size_t t = T; t-- > 0;) {
    s = lstm_step(tape, bwd, xs[t], s);
    hb[t] = s.h;
  }
  std::vector<NodeId> out(T);
  for (size_t t = 0; t < T; ++t) {
    NodeId parts[2] = {hf[t], hb[t]};
    out[t] = tape.concat(parts);
  }
  return out;
}

/// tanh(W x + b).
inline NodeId feedforward(Tape& tape, const Param& W, const Param& b, NodeId x) {
  return tape.tanh_(tape.affine(W, x, nullptr, kNoNode, &b));
}

struct SgdConfig {
  double learning_rate = 0.005;
  double gradient_clip_norm = 5.0;  // <= 0 disables clipping
  double dropout_p = 0.5;
};

/// Global-norm clipping followed by p -= lr * g for every parameter, then
/// gradient reset. Errors on any non-finite gradient before touching values.
inline void sgd_step(std::span<Param* const> params, const SgdConfig& cfg) {
  require(cfg.learning_rate > 0, "sgd_step: learning rate must be positive");
  double sq = 0;
  for (const Param* p : params) {
    double psq = 0;
    if (p->row_sparse) {
      size_t c = p->grad.cols();
      for (uint32_t r : p->touched) {
        const double* g = p->grad.row(r);
        for (size_t i = 0; i < c; ++i) psq += g[i] * g[i];
      }
    } else {
      for (double g : p->grad.v) psq += g * g;
    }
    if (!std::isfinite(psq)) [[unlikely]]
      throw Error("sgd_step: non-finite gradient in " + p->name);
    sq += psq;
  }
  double norm = std::sqrt(sq);
  double scale = 1.0;
  if (cfg.gradient_clip_norm > 0 && norm > cfg.gradient_clip_norm)
    scale = cfg.gradient_clip_norm / norm;
  double step = cfg.learning_rate * scale;
  for (Param* p : params) {
    if (p->row_sparse) {
      size_t c = p->grad.cols();
      for (uint32_t r : p->touched)
        axpy(-step, p->grad.row(r), p->value.row(r), c);
    } else {
      axpy(-step, p->grad.v.data(), p->value.v.data(), p->value.size());
    }
    p->zero_grad();
    debug_check_finite(*p);
  }
}

inline void zero_grads(std::span<Param* const> params) {
  for (Param* p : params) p->zero_grad();
}

/// Compares taped gradients against central finite differences on a sampled
/// subset of parameter entries. `loss_fn` must rebuild the forward pass from
/// current parameter values; `grad_fn` must populate Param::grad. Returns the
/// max relative error over all sampled entries, where relative error uses an
/// absolute floor: |a - b| / max(|a|, |b|, 1e-5). Without the floor,
/// central-difference roundoff (~1e-10 here) dominates near-zero gradients
/// and reports spurious mismatches.
struct GradCheckResult {
  double max_rel_error = 0;
  size_t n_checked = 0;
};

inline constexpr double kGradCheckFloor = 1e-5;

inline GradCheckResult gradient_check(std::span<Param* const> params,
                                      const std::function<double()>& loss_fn,
                                      const std::function<void()>& grad_fn,
                                      double epsilon, size_t samples_per_param,
                                      Rng& rng) {
  require(epsilon > 0, "gradient_check: epsilon must be positive");
  zero_grads(params);
  grad_fn();
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Param* p : params) analytic.push_back(p->grad);
  zero_grads(params);

  GradCheckResult res;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Param* p = params[pi];
    size_t n = p->size();
    for (size_t s = 0; s < samples_per_param && s < n; ++s) {
      size_t idx = (n <= samples_per_param) ? s : static_cast<size_t>(rng.below(n));
      double saved = p->value.v[idx];
      p->value.v[idx] = saved + epsilon;
      double up = loss_fn();
      p->value.v[idx] = saved - epsilon;
      double down = loss_fn();
      p->value.v[idx] = saved;
      double numeric = (up - down) / (2 * epsilon);
      double exact = analytic[pi].v[idx];
      double denom = std::max({std::abs(numeric), std::abs(exact), kGradCheckFloor});
      res.max_rel_error = std::max(res.max_rel_error, std::abs(numeric - exact) / denom);
      ++res.n_checked;
    }
  }
  return res;
}

}  // namespace deid
