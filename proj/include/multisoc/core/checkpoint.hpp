#pragma once

#include "multisoc/core/params.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace multisoc {

// One named tensor in the checkpoint container.
struct CheckpointEntry {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<float> data;  // row-major
};

// Container layout: version byte, u32 entry count, then per entry a header
// record (u16 name length, name bytes, u8 rank, u32 dims..., u64 byte offset
// into the payload), then the payload of little-endian float32 values.
void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

template <typename S>
CheckpointEntry to_entry(const std::string& name, const Matrix<S>& m) {
  CheckpointEntry e;
  e.name = name;
  e.dims = {static_cast<uint32_t>(m.rows()), static_cast<uint32_t>(m.cols())};
  e.data.resize(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      e.data[static_cast<std::size_t>(i * m.cols() + j)] = static_cast<float>(m(i, j));
    }
  }
  return e;
}

template <typename S>
Matrix<S> entry_to_matrix(const CheckpointEntry& e) {
  if (e.dims.size() != 2) {
    throw std::runtime_error("checkpoint entry " + e.name + " is not rank 2");
  }
  Matrix<S> m(static_cast<Index>(e.dims[0]), static_cast<Index>(e.dims[1]));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      m(i, j) = static_cast<S>(e.data[static_cast<std::size_t>(i * m.cols() + j)]);
    }
  }
  return m;
}

}  // namespace multisoc
