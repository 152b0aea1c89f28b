#pragma once

#include <stdexcept>
#include <string>

namespace iprior {

/// Violated precondition or dimension mismatch on the caller's side.
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed input data (file headers, spec files). Carries enough context
/// to locate the offending byte or line.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem-level failure: missing file, truncated payload, unwritable path.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure inside a solver or factorization.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace iprior
