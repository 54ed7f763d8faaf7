#pragma once

#include "multisoc/core/types.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace multisoc {

// Counter-based generator (splitmix64 over a 64-bit state). All sampling in
// the project goes through this so that runs are reproducible from one root
// seed regardless of platform; std::random distributions are avoided on
// purpose since their output is implementation-defined.
class RngStream {
 public:
  RngStream() : state_(0x9e3779b97f4a7c15ull) {}
  explicit RngStream(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform on (0,1), endpoints excluded
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one value per call, cached pair dropped for simplicity
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double gumbel() { return -std::log(-std::log(uniform())); }

  // integer in [0, n)
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Derive an independent child stream; the name keeps streams for different
  // components decorrelated even when they share the root seed.
  RngStream child(std::string_view name) const {
    uint64_t h = 0xcbf29ce484222325ull ^ state_;
    for (char c : name) {
      h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
      h *= 0x100000001b3ull;
    }
    return RngStream(h);
  }

  RngStream child(std::string_view name, uint64_t index) const {
    return child(std::string(name) + "/" + std::to_string(index));
  }

 private:
  uint64_t state_;
};

// i.i.d. Gumbel(0,1) samples, g = -log(-log(u))
template <typename S>
Matrix<S> gumbel_noise(Index rows, Index cols, RngStream& rng) {
  Matrix<S> g(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      g(i, j) = static_cast<S>(rng.gumbel());
    }
  }
  return g;
}

template <typename S>
Matrix<S> normal_noise(Index rows, Index cols, RngStream& rng) {
  Matrix<S> g(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      g(i, j) = static_cast<S>(rng.normal());
    }
  }
  return g;
}

}  // namespace multisoc
