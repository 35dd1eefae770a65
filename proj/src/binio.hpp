#pragma once

// Little-endian binary IO helpers shared by the dataset/model/diag formats.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "agopbench/errors.hpp"

namespace agopbench::binio {

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

inline void put_u8(std::string& out, std::uint8_t v) { put_bytes(out, &v, 1); }

inline void put_u32(std::string& out, std::uint32_t v) {
  const std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                             static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
  put_bytes(out, b, 4);
}

inline void put_u64(std::string& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

/// Sequential reader over an in-memory buffer; throws FormatError with the
/// current byte offset on underrun.
class Reader {
 public:
  Reader(std::string buf, std::string what) : buf_(std::move(buf)), what_(std::move(what)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t total() const { return buf_.size(); }

  void need(std::size_t n, const char* field) {
    if (remaining() < n) {
      throw FormatError(what_ + ": truncated while reading " + field, pos_);
    }
  }

  std::uint8_t u8(const char* field) {
    need(1, field);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* field) {
    const std::uint64_t lo = u32(field);
    const std::uint64_t hi = u32(field);
    return lo | (hi << 32);
  }

  float f32(const char* field) {
    const std::uint32_t bits = u32(field);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  double f64(const char* field) {
    const std::uint64_t bits = u64(field);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  void expect_magic(const char* magic) {
    const std::size_t n = std::strlen(magic);
    need(n, "magic");
    if (buf_.compare(pos_, n, magic) != 0) {
      throw FormatError(what_ + ": bad magic, expected \"" + magic + "\"", pos_);
    }
    pos_ += n;
  }

  void fail(const std::string& msg) const { throw FormatError(what_ + ": " + msg, pos_); }

 private:
  std::string buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace agopbench::binio
