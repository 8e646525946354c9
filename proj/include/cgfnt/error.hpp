#pragma once

#include <stdexcept>
#include <string>

namespace cgfnt {

/// Precondition or shape violation in caller-supplied data.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The sample covariance is (numerically) singular. Under the null this is a
/// probability-zero event, so a test runner treats it as evidence against
/// normality and rejects outright.
class SingularCovariance : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A calibration object or file failed an integrity check.
class CorruptCalibration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine hit a hard limit (series cap, cancellation).
class NumericLimit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Text input (CSV, distribution grammar) could not be parsed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : std::runtime_error(what + " (line " + std::to_string(line) + ", column " +
                           std::to_string(column) + ")"),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace cgfnt
