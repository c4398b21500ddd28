#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gpmem {

// Error taxonomy. The CLI maps each family to an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration: unknown parameter names, malformed kernel/schedule text,
// unknown scopes, invalid prior parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Text that failed to parse. `position` is a 0-based offset into the input.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, std::size_t position)
      : ConfigError(what + " (at position " + std::to_string(position) + ")"),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// Malformed or non-finite input data, failing source functions.
class DataError : public Error {
 public:
  using Error::Error;
};

// Cholesky failure after jitter escalation, non-finite kernel values and
// gradients.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace gpmem
