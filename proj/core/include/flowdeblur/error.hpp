#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowdeblur {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension or channel-count disagreement between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A value outside the accepted domain (NaN/Inf, out-of-range config).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents. offset() is the byte position where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Wrong magic or unsupported version in a binary container.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Architecture construction failure; the message names the offending layer.
class BuildError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or state encountered during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowdeblur
