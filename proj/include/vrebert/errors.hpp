#pragma once

#include <stdexcept>
#include <string>

namespace vrebert {

// Base for every failure raised by the library. The CLI maps ConfigError
// to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid or mutually inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input bytes or text (bad magic, truncated payload, parse error).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a record invariant.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace vrebert
