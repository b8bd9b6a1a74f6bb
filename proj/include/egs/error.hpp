#pragma once

#include <stdexcept>
#include <string>

namespace egs {

// Error categories map onto process exit codes in the CLI:
// usage/config problems -> 1, file I/O problems -> 2, numeric failures -> 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments, bad configuration, sizing violations.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error(msg) {}
};

// File format violations, missing or unreadable files.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Numeric failures: non-finite values, empty rays, degenerate input data.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Violated caller contracts (unsorted blend input, mismatched dimensions).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

}  // namespace egs
