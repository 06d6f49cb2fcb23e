#pragma once

#include <stdexcept>
#include <string>

namespace empsoa {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A documented precondition was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LookupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by training when a loss term becomes NaN/Inf.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(std::string term, long step)
      : std::runtime_error("non-finite loss in term " + term + " at step " + std::to_string(step)),
        term_(std::move(term)),
        step_(step) {}
  const std::string& term() const { return term_; }
  long step() const { return step_; }

 private:
  std::string term_;
  long step_;
};

}  // namespace empsoa
