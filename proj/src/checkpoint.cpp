#include "multisoc/core/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace multisoc {

namespace {

constexpr uint8_t kVersion = 1;

template <typename T>
void put(std::string& buf, T v) {
  // little-endian, byte by byte
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
  }
}

void put_f32(std::string& buf, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put<uint32_t>(buf, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  template <typename T>
  T get() {
    if (pos + sizeof(T) > buf.size()) {
      throw std::runtime_error("checkpoint: truncated file");
    }
    uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    }
    pos += sizeof(T);
    return static_cast<T>(v);
  }

  float get_f32() {
    uint32_t bits = get<uint32_t>();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string get_str(std::size_t n) {
    if (pos + n > buf.size()) {
      throw std::runtime_error("checkpoint: truncated name");
    }
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::string header;
  header.push_back(static_cast<char>(kVersion));
  put<uint32_t>(header, static_cast<uint32_t>(entries.size()));

  std::string payload;
  uint64_t offset = 0;
  for (const auto& e : entries) {
    put<uint16_t>(header, static_cast<uint16_t>(e.name.size()));
    header += e.name;
    put<uint8_t>(header, static_cast<uint8_t>(e.dims.size()));
    uint64_t count = 1;
    for (uint32_t d : e.dims) {
      put<uint32_t>(header, d);
      count *= d;
    }
    if (count != e.data.size()) {
      throw std::runtime_error("checkpoint: dims of " + e.name + " do not match data length");
    }
    put<uint64_t>(header, offset);
    for (float v : e.data) put_f32(payload, v);
    offset += 4ull * e.data.size();
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  }
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) {
    throw std::runtime_error("checkpoint: write failed for " + path);
  }
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("checkpoint: cannot open " + path);
  }
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r{buf};
  uint8_t version = r.get<uint8_t>();
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  uint32_t n = r.get<uint32_t>();
  struct Rec {
    CheckpointEntry e;
    uint64_t offset;
    uint64_t count;
  };
  std::vector<Rec> recs(n);
  for (auto& rec : recs) {
    uint16_t name_len = r.get<uint16_t>();
    rec.e.name = r.get_str(name_len);
    uint8_t rank = r.get<uint8_t>();
    rec.count = 1;
    for (uint8_t k = 0; k < rank; ++k) {
      uint32_t d = r.get<uint32_t>();
      rec.e.dims.push_back(d);
      rec.count *= d;
    }
    rec.offset = r.get<uint64_t>();
  }
  const std::size_t payload_start = r.pos;
  std::vector<CheckpointEntry> out;
  out.reserve(n);
  for (auto& rec : recs) {
    Reader pr{buf};
    pr.pos = payload_start + rec.offset;
    rec.e.data.resize(rec.count);
    for (uint64_t i = 0; i < rec.count; ++i) {
      rec.e.data[i] = pr.get_f32();
    }
    out.push_back(std::move(rec.e));
  }
  return out;
}

}  // namespace multisoc
