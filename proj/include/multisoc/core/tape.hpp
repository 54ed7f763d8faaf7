#pragma once

#include "multisoc/core/types.hpp"

#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace multisoc {

// Reverse-mode tape. A forward pass appends nodes in topological order; each
// node owns its value and a pull-style backward closure. backward() walks the
// tape once in reverse and then flushes parameter gradients into the sinks
// registered via leaf_bound(). First-order only.
//
// Gradient buffers are allocated lazily, so nodes that never receive a
// gradient cost nothing on the backward pass. With grad_enabled=false the
// tape records values only, which is what rollout and evaluation use.
template <typename S>
class Tape;

template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  const Matrix<S>& value() const { return tape->value(id); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

template <typename S>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var<S> leaf(Matrix<S> v) {
    nodes_.push_back(Node{std::move(v), {}, {}});
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  // leaf whose gradient is accumulated into an external buffer after backward
  Var<S> leaf_bound(const Matrix<S>& v, Matrix<S>* grad_sink) {
    Var<S> out = leaf(v);
    if (grad_enabled_ && grad_sink != nullptr) {
      bindings_.emplace_back(out.id, grad_sink);
    }
    return out;
  }

  const Matrix<S>& value(int id) const { return nodes_[id].value; }

  Matrix<S>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) {
      n.grad.setZero(n.value.rows(), n.value.cols());
    }
    return n.grad;
  }

  bool grad_touched(int id) const { return nodes_[id].grad.size() != 0; }

  // Gradient of a var after backward(); zeros if it was never reached.
  Matrix<S> grad_of(const Var<S>& v) const {
    if (!grad_touched(v.id)) {
      return Matrix<S>::Zero(v.rows(), v.cols());
    }
    return nodes_[v.id].grad;
  }

  void backward(const Var<S>& loss) {
    if (!grad_enabled_) {
      throw NumericError("backward() on a tape recorded without gradients");
    }
    if (loss.value().rows() != 1 || loss.value().cols() != 1) {
      throw DimensionError("backward() expects a 1x1 loss");
    }
    grad(loss.id).setConstant(S(1));
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.size() != 0 && n.back) {
        n.back(*this);
      }
    }
    for (auto& [id, sink] : bindings_) {
      if (grad_touched(id)) {
        *sink += nodes_[id].grad;
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

  // -- used by the op free functions --
  Var<S> emit(Matrix<S> v) {
    nodes_.push_back(Node{std::move(v), {}, {}});
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  template <typename Fn>
  void set_back(const Var<S>& out, Fn&& fn) {
    if (grad_enabled_) {
      nodes_[out.id].back = std::forward<Fn>(fn);
    }
  }

 private:
  struct Node {
    Matrix<S> value;
    Matrix<S> grad;
    std::function<void(Tape<S>&)> back;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<int, Matrix<S>*>> bindings_;
  bool grad_enabled_;
};

namespace detail {
inline void require(bool ok, const char* msg) {
  if (!ok) throw DimensionError(msg);
}
}  // namespace detail

// ---- arithmetic ----

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value() + b.value());
  t.set_back(out, [o = out.id, ia = a.id, ib = b.id](Tape<S>& tp) {
    const Matrix<S>& g = tp.grad(o);
    tp.grad(ia) += g;
    tp.grad(ib) += g;
  });
  return out;
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value() - b.value());
  t.set_back(out, [o = out.id, ia = a.id, ib = b.id](Tape<S>& tp) {
    const Matrix<S>& g = tp.grad(o);
    tp.grad(ia) += g;
    tp.grad(ib) -= g;
  });
  return out;
}

// elementwise product; a and b may be the same node
template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value().cwiseProduct(b.value()));
  t.set_back(out, [o = out.id, ia = a.id, ib = b.id](Tape<S>& tp) {
    const Matrix<S>& g = tp.grad(o);
    Matrix<S> ga = g.cwiseProduct(tp.value(ib));
    Matrix<S> gb = g.cwiseProduct(tp.value(ia));
    tp.grad(ia) += ga;
    tp.grad(ib) += gb;
  });
  return out;
}

template <typename S>
Var<S> scale(Var<S> a, S c) {
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value() * c);
  t.set_back(out, [o = out.id, ia = a.id, c](Tape<S>& tp) {
    tp.grad(ia) += tp.grad(o) * c;
  });
  return out;
}

template <typename S>
Var<S> one_minus(Var<S> a) {
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(Matrix<S>::Constant(a.rows(), a.cols(), S(1)) - a.value());
  t.set_back(out, [o = out.id, ia = a.id](Tape<S>& tp) {
    tp.grad(ia) -= tp.grad(o);
  });
  return out;
}

// elementwise product with a constant matrix
template <typename S>
Var<S> mul_mat(Var<S> a, const Matrix<S>& m) {
  detail::require(a.rows() == m.rows() && a.cols() == m.cols(), "mul_mat: shape mismatch");
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value().cwiseProduct(m));
  t.set_back(out, [o = out.id, ia = a.id, m](Tape<S>& tp) {
    tp.grad(ia) += tp.grad(o).cwiseProduct(m);
  });
  return out;
}

// add a constant matrix (no gradient into the constant)
template <typename S>
Var<S> add_mat(Var<S> a, const Matrix<S>& m) {
  detail::require(a.rows() == m.rows() && a.cols() == m.cols(), "add_mat: shape mismatch");
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value() + m);
  t.set_back(out, [o = out.id, ia = a.id](Tape<S>& tp) {
    tp.grad(ia) += tp.grad(o);
  });
  return out;
}

// y = a + rowvec (1xC broadcast over rows); the bias pattern
template <typename S>
Var<S> add_rowvec(Var<S> a, Var<S> v) {
  detail::require(v.rows() == 1 && v.cols() == a.cols(), "add_rowvec: bias shape");
  Tape<S>& t = *a.tape;
  Matrix<S> out_v = a.value();
  out_v.rowwise() += v.value().row(0);
  Var<S> out = t.emit(std::move(out_v));
  t.set_back(out, [o = out.id, ia = a.id, iv = v.id](Tape<S>& tp) {
    const Matrix<S>& g = tp.grad(o);
    tp.grad(ia) += g;
    tp.grad(iv) += g.colwise().sum();
  });
  return out;
}

template <typename S>
Var<S> broadcast_rows(Var<S> v, Index rows) {
  detail::require(v.rows() == 1, "broadcast_rows: expects a row vector");
  Tape<S>& t = *v.tape;
  Var<S> out = t.emit(v.value().replicate(rows, 1));
  t.set_back(out, [o = out.id, iv = v.id](Tape<S>& tp) {
    tp.grad(iv) += tp.grad(o).colwise().sum();
  });
  return out;
}

// scalar (1x1 var) times matrix
template <typename S>
Var<S> scale_by_var(Var<S> a, Var<S> s) {
  detail::require(s.rows() == 1 && s.cols() == 1, "scale_by_var: scalar expected");
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value() * s.value()(0, 0));
  t.set_back(out, [o = out.id, ia = a.id, is = s.id](Tape<S>& tp) {
    const Matrix<S>& g = tp.grad(o);
    tp.grad(ia) += g * tp.value(is)(0, 0);
    tp.grad(is)(0, 0) += g.cwiseProduct(tp.value(ia)).sum();
  });
  return out;
}

template <typename S>
Var<S> add_scalar_var(Var<S> a, Var<S> s) {
  detail::require(s.rows() == 1 && s.cols() == 1, "add_scalar_var: scalar expected");
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value().array() + s.value()(0, 0));
  t.set_back(out, [o = out.id, ia = a.id, is = s.id](Tape<S>& tp) {
    const Matrix<S>& g = tp.grad(o);
    tp.grad(ia) += g;
    tp.grad(is)(0, 0) += g.sum();
  });
  return out;
}

// ---- matrix products ----

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions disagree");
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value() * b.value());
  t.set_back(out, [o = out.id, ia = a.id, ib = b.id](Tape<S>& tp) {
    const Matrix<S>& g = tp.grad(o);
    Matrix<S> ga = g * tp.value(ib).transpose();
    Matrix<S> gb = tp.value(ia).transpose() * g;
    tp.grad(ia) += ga;
    tp.grad(ib) += gb;
  });
  return out;
}

// y = a * b^T
template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  detail::require(a.cols() == b.cols(), "matmul_nt: inner dimensions disagree");
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value() * b.value().transpose());
  t.set_back(out, [o = out.id, ia = a.id, ib = b.id](Tape<S>& tp) {
    const Matrix<S>& g = tp.grad(o);
    Matrix<S> ga = g * tp.value(ib);
    Matrix<S> gb = g.transpose() * tp.value(ia);
    tp.grad(ia) += ga;
    tp.grad(ib) += gb;
  });
  return out;
}

// y = xW + b
template <typename S>
Var<S> affine(Var<S> x, Var<S> w, Var<S> b) {
  return add_rowvec(matmul(x, w), b);
}

// ---- nonlinearities ----

template <typename S>
Var<S> sigmoid(Var<S> a) {
  Tape<S>& t = *a.tape;
  Matrix<S> y = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  Var<S> out = t.emit(std::move(y));
  t.set_back(out, [o = out.id, ia = a.id](Tape<S>& tp) {
    const Matrix<S>& yv = tp.value(o);
    tp.grad(ia) += tp.grad(o).cwiseProduct(
        (yv.array() * (S(1) - yv.array())).matrix());
  });
  return out;
}

template <typename S>
Var<S> tanh(Var<S> a) {
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value().array().tanh().matrix());
  t.set_back(out, [o = out.id, ia = a.id](Tape<S>& tp) {
    const Matrix<S>& yv = tp.value(o);
    tp.grad(ia) += tp.grad(o).cwiseProduct(
        (S(1) - yv.array().square()).matrix());
  });
  return out;
}

template <typename S>
Var<S> relu(Var<S> a) {
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value().cwiseMax(S(0)));
  t.set_back(out, [o = out.id, ia = a.id](Tape<S>& tp) {
    Matrix<S> m = (tp.value(ia).array() > S(0)).template cast<S>().matrix();
    tp.grad(ia) += tp.grad(o).cwiseProduct(m);
  });
  return out;
}

template <typename S>
Var<S> exp(Var<S> a) {
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value().array().exp().matrix());
  t.set_back(out, [o = out.id, ia = a.id](Tape<S>& tp) {
    tp.grad(ia) += tp.grad(o).cwiseProduct(tp.value(o));
  });
  return out;
}

// gradient flows only through the strict interior
template <typename S>
Var<S> clamp(Var<S> a, S lo, S hi) {
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value().cwiseMax(lo).cwiseMin(hi));
  t.set_back(out, [o = out.id, ia = a.id, lo, hi](Tape<S>& tp) {
    const auto& x = tp.value(ia).array();
    Matrix<S> m = ((x > lo) && (x < hi)).template cast<S>().matrix();
    tp.grad(ia) += tp.grad(o).cwiseProduct(m);
  });
  return out;
}

// elementwise minimum; ties route the gradient to a
template <typename S>
Var<S> min_elem(Var<S> a, Var<S> b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "min_elem: shape mismatch");
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value().cwiseMin(b.value()));
  t.set_back(out, [o = out.id, ia = a.id, ib = b.id](Tape<S>& tp) {
    const Matrix<S>& g = tp.grad(o);
    Matrix<S> pick_a = (tp.value(ia).array() <= tp.value(ib).array()).template cast<S>().matrix();
    tp.grad(ia) += g.cwiseProduct(pick_a);
    tp.grad(ib) += g.cwiseProduct((Matrix<S>::Constant(g.rows(), g.cols(), S(1)) - pick_a));
  });
  return out;
}

// ---- reductions / reshaping ----

// per-row sum -> Rx1
template <typename S>
Var<S> sum_cols(Var<S> a) {
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value().rowwise().sum());
  t.set_back(out, [o = out.id, ia = a.id, c = a.cols()](Tape<S>& tp) {
    tp.grad(ia) += tp.grad(o).replicate(1, c);
  });
  return out;
}

template <typename S>
Var<S> sum_all(Var<S> a) {
  Tape<S>& t = *a.tape;
  Matrix<S> v(1, 1);
  v(0, 0) = a.value().sum();
  Var<S> out = t.emit(std::move(v));
  t.set_back(out, [o = out.id, ia = a.id](Tape<S>& tp) {
    tp.grad(ia).array() += tp.grad(o)(0, 0);
  });
  return out;
}

// sum(a .* w) with constant weights -> 1x1; used for masked means
template <typename S>
Var<S> weighted_sum_all(Var<S> a, const Matrix<S>& w) {
  detail::require(a.rows() == w.rows() && a.cols() == w.cols(), "weighted_sum_all: shape mismatch");
  Tape<S>& t = *a.tape;
  Matrix<S> v(1, 1);
  v(0, 0) = a.value().cwiseProduct(w).sum();
  Var<S> out = t.emit(std::move(v));
  t.set_back(out, [o = out.id, ia = a.id, w](Tape<S>& tp) {
    tp.grad(ia) += w * tp.grad(o)(0, 0);
  });
  return out;
}

template <typename S>
Var<S> row(Var<S> a, Index i) {
  detail::require(i >= 0 && i < a.rows(), "row: index out of range");
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value().row(i));
  t.set_back(out, [o = out.id, ia = a.id, i](Tape<S>& tp) {
    tp.grad(ia).row(i) += tp.grad(o).row(0);
  });
  return out;
}

template <typename S>
Var<S> select_rows(Var<S> a, std::vector<Index> idx) {
  Tape<S>& t = *a.tape;
  Matrix<S> v(static_cast<Index>(idx.size()), a.cols());
  for (Index k = 0; k < v.rows(); ++k) {
    detail::require(idx[k] >= 0 && idx[k] < a.rows(), "select_rows: index out of range");
    v.row(k) = a.value().row(idx[k]);
  }
  Var<S> out = t.emit(std::move(v));
  t.set_back(out, [o = out.id, ia = a.id, idx = std::move(idx)](Tape<S>& tp) {
    const Matrix<S>& g = tp.grad(o);
    Matrix<S>& ga = tp.grad(ia);
    for (Index k = 0; k < g.rows(); ++k) {
      ga.row(idx[k]) += g.row(k);
    }
  });
  return out;
}

template <typename S>
Var<S> slice_cols(Var<S> a, Index j0, Index n) {
  detail::require(j0 >= 0 && j0 + n <= a.cols(), "slice_cols: range out of bounds");
  Tape<S>& t = *a.tape;
  Var<S> out = t.emit(a.value().middleCols(j0, n));
  t.set_back(out, [o = out.id, ia = a.id, j0, n](Tape<S>& tp) {
    tp.grad(ia).middleCols(j0, n) += tp.grad(o);
  });
  return out;
}

template <typename S>
Var<S> concat_cols(Var<S> a, Var<S> b) {
  detail::require(a.rows() == b.rows(), "concat_cols: row counts differ");
  Tape<S>& t = *a.tape;
  Matrix<S> v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  Var<S> out = t.emit(std::move(v));
  t.set_back(out, [o = out.id, ia = a.id, ib = b.id, ca = a.cols(), cb = b.cols()](Tape<S>& tp) {
    const Matrix<S>& g = tp.grad(o);
    tp.grad(ia) += g.leftCols(ca);
    tp.grad(ib) += g.rightCols(cb);
  });
  return out;
}

// expression sugar
template <typename S>
Var<S> operator+(Var<S> a, Var<S> b) { return add(a, b); }
template <typename S>
Var<S> operator-(Var<S> a, Var<S> b) { return sub(a, b); }
template <typename S>
Var<S> operator*(Var<S> a, S c) { return scale(a, c); }

}  // namespace multisoc
