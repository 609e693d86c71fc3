#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "deid/tensor.hpp"

namespace deid {

// Linear-chain CRF over unnormalized emission scores. The transition tensor
// is (L+2) x (L+2) with two synthetic states appended: START = L, END = L+1.
// A path y_0..y_{T-1} scores
//   trans(START, y_0) + sum_t em(t, y_t) + sum_{t>0} trans(y_{t-1}, y_t)
//   + trans(y_{T-1}, END).

inline size_t crf_start(size_t n_labels) { return n_labels; }
inline size_t crf_end(size_t n_labels) { return n_labels + 1; }

/// Read-only view enforcing the mask: transitions into START and out of END
/// (and START->END, which no nonempty path can use) read as -inf. The stored
/// parameter itself stays finite; the algorithms below only ever read the
/// unmasked entries.
struct TransitionView {
  const Tensor& m;
  size_t n_labels;

  double at(size_t i, size_t j) const {
    if (j == crf_start(n_labels) || i == crf_end(n_labels) ||
        (i == crf_start(n_labels) && j == crf_end(n_labels)))
      return -std::numeric_limits<double>::infinity();
    return m.at(i, j);
  }
};

inline double log_sum_exp(const double* x, size_t n) {
  double m = x[0];
  for (size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  double s = 0;
  for (size_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

inline void check_crf_inputs(const Tensor& em, const Tensor& trans) {
  size_t L = em.cols();
  require(em.rows() >= 1, "crf: empty emission matrix");
  require(trans.rows() == L + 2 && trans.cols() == L + 2,
          "crf: transition matrix must be (L+2) x (L+2)");
}

/// Score of one label path, including START/END transitions.
inline double crf_score(const Tensor& em, const Tensor& trans,
                        std::span<const int> path) {
  check_crf_inputs(em, trans);
  size_t T = em.rows(), L = em.cols();
  require(path.size() == T, "crf_score: path length mismatch");
  for (int y : path)
    require(y >= 0 && static_cast<size_t>(y) < L, "crf_score: label index out of range");
  double s = trans.at(crf_start(L), static_cast<size_t>(path[0]));
  for (size_t t = 0; t < T; ++t) {
    if (t > 0) s += trans.at(static_cast<size_t>(path[t - 1]), static_cast<size_t>(path[t]));
    s += em.at(t, static_cast<size_t>(path[t]));
  }
  s += trans.at(static_cast<size_t>(path[T - 1]), crf_end(L));
  return s;
}

/// log sum over all label paths of exp(path score) — the forward algorithm,
/// computed in log space with max shifting.
inline double crf_log_partition(const Tensor& em, const Tensor& trans) {
  check_crf_inputs(em, trans);
  size_t T = em.rows(), L = em.cols();
  std::vector<double> alpha(L), next(L), work(L);
  for (size_t j = 0; j < L; ++j) alpha[j] = trans.at(crf_start(L), j) + em.at(0, j);
  for (size_t t = 1; t < T; ++t) {
    for (size_t j = 0; j < L; ++j) {
      for (size_t i = 0; i < L; ++i) work[i] = alpha[i] + trans.at(i, j);
      next[j] = log_sum_exp(work.data(), L) + em.at(t, j);
    }
    std::swap(alpha, next);
  }
  for (size_t j = 0; j < L; ++j) work[j] = alpha[j] + trans.at(j, crf_end(L));
  return log_sum_exp(work.data(), L);
}

struct ViterbiResult {
  std::vector<int> path;
  double score = 0;
};

/// Exact argmax path. Ties break toward the lower label index (strict `>`
/// comparisons keep the first maximum).
inline ViterbiResult crf_viterbi(const Tensor& em, const Tensor& trans) {
  check_crf_inputs(em, trans);
  size_t T = em.rows(), L = em.cols();
  std::vector<double> score(L), next(L);
  std::vector<int> back((T > 1 ? T - 1 : 0) * L);
  for (size_t j = 0; j < L; ++j) score[j] = trans.at(crf_start(L), j) + em.at(0, j);
  for (size_t t = 1; t < T; ++t) {
    for (size_t j = 0; j < L; ++j) {
      double best = score[0] + trans.at(0, j);
      int best_i = 0;
      for (size_t i = 1; i < L; ++i) {
        double s = score[i] + trans.at(i, j);
        if (s > best) {
          best = s;
          best_i = static_cast<int>(i);
        }
      }
      next[j] = best + em.at(t, j);
      back[(t - 1) * L + j] = best_i;
    }
    std::swap(score, next);
  }
  double best = score[0] + trans.at(0, crf_end(L));
  int best_j = 0;
  for (size_t j = 1; j < L; ++j) {
    double s = score[j] + trans.at(j, crf_end(L));
    if (s > best) {
      best = s;
      best_j = static_cast<int>(j);
    }
  }
  ViterbiResult r;
  r.score = best;
  r.path.assign(T, 0);
  r.path[T - 1] = best_j;
  for (size_t t = T - 1; t > 0; --t)
    r.path[t - 1] = back[(t - 1) * L + static_cast<size_t>(r.path[t])];
  return r;
}

/// Negative log-likelihood of the gold path plus its gradients.
///
/// d_em receives (posterior marginals - gold indicators), scaled by `scale`;
/// d_trans accumulates expected minus observed transition counts, including
/// the START row and END column. Either output may be null. Returns the NLL.
inline double crf_nll_grads(const Tensor& em, const Tensor& trans,
                            std::span<const int> gold, double scale,
                            Tensor* d_em, Tensor* d_trans) {
  check_crf_inputs(em, trans);
  size_t T = em.rows(), L = em.cols();
  require(gold.size() == T, "crf_nll: gold length mismatch");

  // Forward and backward log messages.
  Tensor alpha = Tensor::zeros({T, L});
  Tensor beta = Tensor::zeros({T, L});
  std::vector<double> work(L);
  for (size_t j = 0; j < L; ++j) alpha.at(0, j) = trans.at(crf_start(L), j) + em.at(0, j);
  for (size_t t = 1; t < T; ++t)
    for (size_t j = 0; j < L; ++j) {
      for (size_t i = 0; i < L; ++i) work[i] = alpha.at(t - 1, i) + trans.at(i, j);
      alpha.at(t, j) = log_sum_exp(work.data(), L) + em.at(t, j);
    }
  for (size_t i = 0; i < L; ++i) beta.at(T - 1, i) = trans.at(i, crf_end(L));
  for (size_t t = T - 1; t > 0; --t)
    for (size_t i = 0; i < L; ++i) {
      for (size_t j = 0; j < L; ++j)
        work[j] = trans.at(i, j) + em.at(t, j) + beta.at(t, j);
      beta.at(t - 1, i) = log_sum_exp(work.data(), L);
    }
  for (size_t j = 0; j < L; ++j) work[j] = alpha.at(T - 1, j) + trans.at(j, crf_end(L));
  double log_z = log_sum_exp(work.data(), L);

  double nll = log_z - crf_score(em, trans, gold);

  if (d_em) {
    require(d_em->rows() == T && d_em->cols() == L, "crf_nll: d_em shape");
    for (size_t t = 0; t < T; ++t)
      for (size_t j = 0; j < L; ++j) {
        double marg = std::exp(alpha.at(t, j) + beta.at(t, j) - log_z);
        double ind = (gold[t] == static_cast<int>(j)) ? 1.0 : 0.0;
        d_em->at(t, j) += scale * (marg - ind);
      }
  }
  if (d_trans) {
    require(d_trans->rows() == L + 2 && d_trans->cols() == L + 2, "crf_nll: d_trans shape");
    for (size_t j = 0; j < L; ++j) {
      double marg0 = std::exp(alpha.at(0, j) + beta.at(0, j) - log_z);
      double ind = (gold[0] == static_cast<int>(j)) ? 1.0 : 0.0;
      d_trans->at(crf_start(L), j) += scale * (marg0 - ind);
    }
    for (size_t t = 1; t < T; ++t)
      for (size_t i = 0; i < L; ++i)
        for (size_t j = 0; j < L; ++j) {
          double pair = std::exp(alpha.at(t - 1, i) + trans.at(i, j) + em.at(t, j) +
                                 beta.at(t, j) - log_z);
          double ind = (gold[t - 1] == static_cast<int>(i) &&
                        gold[t] == static_cast<int>(j))
                           ? 1.0
                           : 0.0;
          d_trans->at(i, j) += scale * (pair - ind);
        }
    for (size_t i = 0; i < L; ++i) {
      double margT = std::exp(alpha.at(T - 1, i) + beta.at(T - 1, i) - log_z);
      double ind = (gold[T - 1] == static_cast<int>(i)) ? 1.0 : 0.0;
      d_trans->at(i, crf_end(L)) += scale * (margT - ind);
    }
  }
  return nll;
}

inline double crf_nll(const Tensor& em, const Tensor& trans, std::span<const int> gold) {
  return crf_nll_grads(em, trans, gold, 0.0, nullptr, nullptr);
}

}  // namespace deid
