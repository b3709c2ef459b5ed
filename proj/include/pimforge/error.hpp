#pragma once

#include <stdexcept>
#include <string>

namespace pimforge {

// Every failure in the library surfaces as one of these. The message carries
// the context a caller needs to act on it (layer index, element index, path).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file or unknown format version.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A documented type invariant does not hold.
class InvariantError : public Error {
 public:
  using Error::Error;
};

// Inconsistent configuration (budget exceeds group count, shape mismatch, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Operand outside the declared fixed-point range.
class RangeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pimforge
