#pragma once

#include "multisoc/core/random.hpp"
#include "multisoc/core/tape.hpp"

#include <map>
#include <string>

namespace multisoc {

// Named parameter collection with matching gradient accumulators. Iteration
// order is the map order (lexicographic), which keeps multi-worker gradient
// reductions and checkpoint layout deterministic.
template <typename S>
class ParamSet {
 public:
  struct Entry {
    Matrix<S> value;
    Matrix<S> grad;
  };

  Matrix<S>& add(const std::string& name, Index rows, Index cols) {
    auto [it, inserted] = entries_.try_emplace(name);
    if (!inserted) {
      throw std::runtime_error("ParamSet: duplicate parameter " + name);
    }
    it->second.value.setZero(rows, cols);
    it->second.grad.setZero(rows, cols);
    return it->second.value;
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  Matrix<S>& value(const std::string& name) { return at(name).value; }
  const Matrix<S>& value(const std::string& name) const { return at(name).value; }
  Matrix<S>& grad(const std::string& name) { return at(name).grad; }

  // record the parameter as a tape leaf; backward() accumulates into grad
  Var<S> use(Tape<S>& tape, const std::string& name) {
    Entry& e = at(name);
    return tape.leaf_bound(e.value, &e.grad);
  }

  void zero_grads() {
    for (auto& [name, e] : entries_) e.grad.setZero();
  }

  Index scalar_count() const {
    Index n = 0;
    for (const auto& [name, e] : entries_) n += e.value.size();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

 private:
  Entry& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
      throw std::runtime_error("ParamSet: unknown parameter " + name);
    }
    return it->second;
  }
  const Entry& at(const std::string& name) const {
    return const_cast<ParamSet*>(this)->at(name);
  }

  std::map<std::string, Entry> entries_;
};

// U(-a, a) with a = gain * sqrt(1 / fan_in)
template <typename S>
void uniform_init(Matrix<S>& w, RngStream& rng, double gain = 1.0) {
  const double bound = gain * std::sqrt(1.0 / static_cast<double>(w.rows()));
  for (Index i = 0; i < w.rows(); ++i) {
    for (Index j = 0; j < w.cols(); ++j) {
      w(i, j) = static_cast<S>(rng.uniform(-bound, bound));
    }
  }
}

// Orthogonal init via QR of a Gaussian matrix; signs fixed from the R
// diagonal so the result is unique given the draw.
template <typename S>
void orthogonal_init(Matrix<S>& w, RngStream& rng, double gain = 1.0) {
  const Index r = w.rows(), c = w.cols();
  const bool tall = r >= c;
  Matrix<double> a(tall ? r : c, tall ? c : r);
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      a(i, j) = rng.normal();
    }
  }
  Eigen::HouseholderQR<Matrix<double>> qr(a);
  Matrix<double> q = qr.householderQ() * Matrix<double>::Identity(a.rows(), a.cols());
  Matrix<double> rr = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (Index j = 0; j < q.cols(); ++j) {
    if (rr(j, j) < 0) q.col(j) = -q.col(j);
  }
  if (!tall) q.transposeInPlace();
  w = (q * gain).template cast<S>();
}

}  // namespace multisoc
