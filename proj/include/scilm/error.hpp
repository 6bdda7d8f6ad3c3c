#pragma once

#include <stdexcept>
#include <string>

namespace scilm {

// Programmer-facing contract breach (shape mismatch, empty input, ...).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Malformed or inconsistent dataset / file input.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Bad run configuration (unknown key, unparsable value, out-of-range hyperparameter).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss, degenerate standalone cosine, failed numerical check.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Evaluation preconditions not met (missing test split, empty candidate set).
class EvalError : public std::runtime_error {
 public:
  explicit EvalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace scilm
