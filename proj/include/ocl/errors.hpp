#pragma once

#include <stdexcept>
#include <string>

namespace ocl {

/// Invalid sizes, dimensions or indices passed to an operation.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A requested configuration cannot be realized (e.g. an infeasible split).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed external input. `line()` is 1-based, 0 when not line-specific.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Non-finite values reached a parameter update.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation called on an object that is not in a usable state
/// (empty network, unlabeled memory, dead neuron id).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace ocl
