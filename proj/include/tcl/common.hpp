#pragma once

// Shared error types and small helpers used across the library.

#include <stdexcept>
#include <string>

namespace tcl {

// Raised when a caller breaks a documented precondition (bad shapes, empty
// groups, out-of-range ids). These are programming errors, not data errors.
class ContractViolation : public std::runtime_error {
 public:
  explicit ContractViolation(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a numeric path produces a non-finite value where the contract
// requires finiteness (NaN in backward, non-finite KL inputs).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Raised on malformed files (checkpoints, configs, datasets).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

}  // namespace tcl
