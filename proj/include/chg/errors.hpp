#pragma once

#include <stdexcept>
#include <string>

namespace chg {

// Bad caller input: malformed files, shape mismatches, out-of-range indices.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Mathematically undefined request (n = 0, empty set, C = 1 with noise, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Exact enumeration refused because the game is larger than the limit.
class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Non-finite values produced during a computation (diverging training etc).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An efficiency audit found a violation above tolerance.
class AuditError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace chg
