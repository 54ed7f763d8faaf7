#pragma once

#include "multisoc/core/tape.hpp"

#include <cmath>
#include <vector>

namespace multisoc {

struct DegenerateRowError : std::runtime_error {
  explicit DegenerateRowError(const std::string& what) : std::runtime_error(what) {}
};

// Row-wise softmax with an optional boolean mask. Masked entries are exactly
// zero in the output and receive no gradient; each row must keep at least one
// admissible entry. Invariant under adding a constant to a row (max is
// subtracted before exponentiation).
template <typename S>
Var<S> softmax_rows(Var<S> a, const MatrixXb* mask = nullptr) {
  Tape<S>& t = *a.tape;
  const Matrix<S>& x = a.value();
  if (mask != nullptr) {
    detail::require(mask->rows() == x.rows() && mask->cols() == x.cols(),
                    "softmax_rows: mask shape mismatch");
  }
  Matrix<S> y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    S mx = -std::numeric_limits<S>::infinity();
    for (Index j = 0; j < x.cols(); ++j) {
      if (!mask || (*mask)(i, j)) mx = std::max(mx, x(i, j));
    }
    if (mx == -std::numeric_limits<S>::infinity()) {
      throw DegenerateRowError("softmax_rows: fully masked row " + std::to_string(i));
    }
    S denom = S(0);
    for (Index j = 0; j < x.cols(); ++j) {
      if (!mask || (*mask)(i, j)) {
        y(i, j) = std::exp(x(i, j) - mx);
        denom += y(i, j);
      } else {
        y(i, j) = S(0);
      }
    }
    y.row(i) /= denom;
  }
  Var<S> out = t.emit(std::move(y));
  t.set_back(out, [o = out.id, ia = a.id](Tape<S>& tp) {
    const Matrix<S>& yv = tp.value(o);
    const Matrix<S>& g = tp.grad(o);
    Matrix<S>& ga = tp.grad(ia);
    for (Index i = 0; i < yv.rows(); ++i) {
      S dot = g.row(i).cwiseProduct(yv.row(i)).sum();
      ga.row(i) += yv.row(i).cwiseProduct(g.row(i).array().matrix() -
                                          Matrix<S>::Constant(1, yv.cols(), dot));
    }
  });
  return out;
}

// Straight-through one-hot: forward snaps every row of a soft distribution to
// a one-hot at its argmax, backward is the identity so the soft gradient
// passes through unchanged. Ties resolve to the lowest index.
template <typename S>
Var<S> st_hard_rows(Var<S> soft) {
  Tape<S>& t = *soft.tape;
  const Matrix<S>& s = soft.value();
  Matrix<S> h = Matrix<S>::Zero(s.rows(), s.cols());
  for (Index i = 0; i < s.rows(); ++i) {
    Index best;
    s.row(i).maxCoeff(&best);
    h(i, best) = S(1);
  }
  Var<S> out = t.emit(std::move(h));
  t.set_back(out, [o = out.id, ia = soft.id](Tape<S>& tp) {
    tp.grad(ia) += tp.grad(o);
  });
  return out;
}

// Per-sample scaled q k^T over a batch of stacked blocks: q and k hold B
// blocks of n rows each; output row-block b is (q_b k_b^T) * scale, shape
// (B*n) x n.
template <typename S>
Var<S> blocks_qkt(Var<S> q, Var<S> k, Index n, S scale_factor) {
  detail::require(q.rows() == k.rows() && q.cols() == k.cols(), "blocks_qkt: q/k shape mismatch");
  detail::require(q.rows() % n == 0, "blocks_qkt: rows not divisible by block size");
  Tape<S>& t = *q.tape;
  const Index b_count = q.rows() / n;
  Matrix<S> v(q.rows(), n);
  for (Index b = 0; b < b_count; ++b) {
    v.middleRows(b * n, n).noalias() =
        q.value().middleRows(b * n, n) * k.value().middleRows(b * n, n).transpose() * scale_factor;
  }
  Var<S> out = t.emit(std::move(v));
  t.set_back(out, [o = out.id, iq = q.id, ik = k.id, n, b_count, scale_factor](Tape<S>& tp) {
    const Matrix<S>& g = tp.grad(o);
    Matrix<S>& gq = tp.grad(iq);
    Matrix<S>& gk = tp.grad(ik);
    for (Index b = 0; b < b_count; ++b) {
      auto gb = g.middleRows(b * n, n);
      gq.middleRows(b * n, n).noalias() += gb * tp.value(ik).middleRows(b * n, n) * scale_factor;
      gk.middleRows(b * n, n).noalias() += gb.transpose() * tp.value(iq).middleRows(b * n, n) * scale_factor;
    }
  });
  return out;
}

// Per-sample w_b v_b over stacked blocks: w holds B blocks of n x n weights,
// v holds B blocks of n x d features; output block b is w_b v_b.
template <typename S>
Var<S> blocks_apply(Var<S> w, Var<S> v, Index n) {
  detail::require(w.cols() == n && w.rows() % n == 0, "blocks_apply: weight block shape");
  detail::require(v.rows() == w.rows(), "blocks_apply: feature rows mismatch");
  Tape<S>& t = *w.tape;
  const Index b_count = w.rows() / n;
  Matrix<S> out_v(v.rows(), v.cols());
  for (Index b = 0; b < b_count; ++b) {
    out_v.middleRows(b * n, n).noalias() =
        w.value().middleRows(b * n, n) * v.value().middleRows(b * n, n);
  }
  Var<S> out = t.emit(std::move(out_v));
  t.set_back(out, [o = out.id, iw = w.id, iv = v.id, n, b_count](Tape<S>& tp) {
    const Matrix<S>& g = tp.grad(o);
    Matrix<S>& gw = tp.grad(iw);
    Matrix<S>& gv = tp.grad(iv);
    for (Index b = 0; b < b_count; ++b) {
      auto gb = g.middleRows(b * n, n);
      gw.middleRows(b * n, n).noalias() += gb * tp.value(iv).middleRows(b * n, n).transpose();
      gv.middleRows(b * n, n).noalias() += tp.value(iw).middleRows(b * n, n).transpose() * gb;
    }
  });
  return out;
}

// Gated recurrent unit. Convention: the update gate z interpolates toward the
// previous state, h' = z .* h_prev + (1 - z) .* candidate, so a saturated
// update gate (large positive bias) freezes the state at h_prev. The
// saturation unit test pins this convention.
template <typename S>
struct GruWeights {
  Var<S> wz, uz, bz;  // update gate: input, recurrent, bias
  Var<S> wr, ur, br;  // reset gate
  Var<S> wh, uh, bh;  // candidate
};

template <typename S>
Var<S> gru_cell(Var<S> h_prev, Var<S> x, const GruWeights<S>& p) {
  detail::require(h_prev.cols() == p.uz.rows(), "gru_cell: hidden size mismatch");
  detail::require(x.cols() == p.wz.rows(), "gru_cell: input size mismatch");
  Var<S> z = sigmoid(add_rowvec(add(matmul(x, p.wz), matmul(h_prev, p.uz)), p.bz));
  Var<S> r = sigmoid(add_rowvec(add(matmul(x, p.wr), matmul(h_prev, p.ur)), p.br));
  Var<S> cand = tanh(add_rowvec(add(matmul(x, p.wh), matmul(mul(r, h_prev), p.uh)), p.bh));
  return add(mul(z, h_prev), mul(one_minus(z), cand));
}

}  // namespace multisoc
