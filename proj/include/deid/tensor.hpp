#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "deid/common.hpp"
#include "deid/rng.hpp"

namespace deid {

// Unrolled kernels. The four-accumulator dot defines the reduction order
// explicitly so results are identical across compilers and ISAs.
inline double dot(const double* a, const double* b, size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline void axpy(double alpha, const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

/// Dense row-major tensor of 64-bit floats (rank 1 or 2 is all the model needs).
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> v;

  Tensor() = default;
  static Tensor zeros(std::vector<size_t> shape) {
    Tensor t;
    t.shape = std::move(shape);
    size_t n = 1;
    for (size_t d : t.shape) n *= d;
    t.v.assign(n, 0.0);
    return t;
  }

  size_t size() const { return v.size(); }
  size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  size_t cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }

  double* row(size_t r) { return v.data() + r * cols(); }
  const double* row(size_t r) const { return v.data() + r * cols(); }

  double& at(size_t i, size_t j) { return v[i * cols() + j]; }
  double at(size_t i, size_t j) const { return v[i * cols() + j]; }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

/// A trainable tensor with its gradient buffer.
///
/// `row_sparse` marks embedding tables: only rows recorded in `touched` carry
/// nonzero gradient, so the optimizer visits just those rows.
struct Param {
  std::string name;
  Tensor value;
  mutable Tensor grad;
  bool row_sparse = false;
  mutable std::vector<uint32_t> touched;

  Param() = default;
  Param(std::string n, std::vector<size_t> shape, bool sparse = false)
      : name(std::move(n)),
        value(Tensor::zeros(shape)),
        grad(Tensor::zeros(shape)),
        row_sparse(sparse) {}

  size_t size() const { return value.size(); }

  void zero_grad() const {
    if (row_sparse) {
      size_t c = grad.cols();
      for (uint32_t r : touched) {
        double* g = grad.row(r);
        std::fill(g, g + c, 0.0);
      }
      touched.clear();
    } else {
      std::fill(grad.v.begin(), grad.v.end(), 0.0);
    }
  }
};

inline void init_uniform(Param& p, Rng& rng, double limit) {
  for (double& x : p.value.v) x = rng.uniform(-limit, limit);
}

/// Glorot-style uniform init: limit = sqrt(6 / (fan_in + fan_out)).
inline void init_glorot(Param& p, Rng& rng, size_t fan_in, size_t fan_out) {
  init_uniform(p, rng, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

#ifndef NDEBUG
inline void debug_check_finite(const Param& p) {
  require(p.value.all_finite(), "non-finite values in tensor " + p.name);
}
#else
inline void debug_check_finite(const Param&) {}
#endif

}  // namespace deid
