#pragma once

#include <stdexcept>
#include <string>

namespace pcinr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched sizes or shapes between collaborating containers.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf escaped into a computation that forbids it.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or incompatible file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ConfigError(message);
}

inline void require_shape(bool condition, const std::string& message) {
  if (!condition) throw ShapeError(message);
}

}  // namespace pcinr
