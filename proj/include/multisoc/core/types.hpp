#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace multisoc {

// Dense row-major matrix templated on scalar. Vectors are 1xN or Nx1 views of
// the same type; everything the network touches is rank <= 2.
template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatrixXb = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vec2 = Eigen::Vector2d;

using Index = Eigen::Index;

struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

template <typename S>
bool all_finite(const Matrix<S>& m) {
  return m.allFinite();
}

template <typename S>
void require_finite(const Matrix<S>& m, const char* where) {
  if (!m.allFinite()) {
    throw NumericError(std::string("non-finite values in ") + where);
  }
}

}  // namespace multisoc
