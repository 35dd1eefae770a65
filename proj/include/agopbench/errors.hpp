#pragma once

#include <stdexcept>
#include <string>

namespace agopbench {

// Base for all library errors so callers can catch one type at the CLI
// boundary and map it to an exit code.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor dimension mismatches; the message names the offending axis.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid argument values (bad enum, out-of-range label, odd sample count...).
struct ParamError : Error {
  using Error::Error;
};

// Operation called in a state that does not admit it (finalized hook,
// backward from a non-scalar, ...).
struct StateError : Error {
  using Error::Error;
};

// Malformed on-disk data. The binary variant carries the byte offset where
// parsing failed; text formats report position in the message instead.
struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error(msg), offset(0) {}
  FormatError(const std::string& msg, std::size_t byte_offset)
      : Error(msg + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

// Filesystem-level failure; message includes the path.
struct IoError : Error {
  using Error::Error;
};

}  // namespace agopbench
