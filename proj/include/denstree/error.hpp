#pragma once

#include <stdexcept>
#include <string>

namespace denstree {

/// Bad input data: malformed files, out-of-range values, degenerate columns.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Illegal configuration: unknown mode, incompatible leaf family, bad flag values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model or schema text that cannot be parsed. `offset` is the byte position
/// reported by the parser, or npos when the failure is structural.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t offset = std::string::npos)
      : DataError(what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnsupportedVersion : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace denstree
