#pragma once

#include <stdexcept>
#include <string>

namespace cogdiag {

// Base for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (wrong field count, bad JSON). Carries a line number
// when one is known.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  explicit ParseError(const std::string& msg) : Error(msg), line_(0) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input violating a domain invariant (empty concept set,
// score outside {0,1}, missing embedding rows).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Bad configuration values (ratios not summing to 1, tau <= 0).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor shape disagreement; the message names both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf surfaced by a numeric operation, or log of a non-positive value.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse: a precondition the caller controls was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A metric that is undefined on the given input (single-class AUC).
class MetricError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// Remote endpoint failures after retries are exhausted.
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace cogdiag
