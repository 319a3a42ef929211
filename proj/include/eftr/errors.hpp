#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace eftr {

// Invalid configuration or invocation (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (CLI exit code 1).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Non-finite loss or intermediate value (CLI exit code 2).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, std::optional<long> index = std::nullopt)
      : std::runtime_error(index ? what + " (index " + std::to_string(*index) + ")" : what),
        index_(index) {}

  // Offending sample index within the batch, or epoch for training divergence.
  std::optional<long> index() const { return index_; }

 private:
  std::optional<long> index_;
};

// Malformed or out-of-support data (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, std::optional<long> row = std::nullopt)
      : std::runtime_error(row ? what + " (row " + std::to_string(*row) + ")" : what), row_(row) {}

  std::optional<long> row() const { return row_; }

 private:
  std::optional<long> row_;
};

}  // namespace eftr
