#pragma once

#include <stdexcept>
#include <string>

namespace asbf {

/// Shapes of operands do not conform to the operation's rule.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller-side precondition was violated (bad argument value, wrong rank).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Factorization failure, non-finite value or similar numerical breakdown.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input is valid in shape but carries no usable signal (zero norm, zero gains).
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Object used before it was initialized (e.g. empty batch-norm running stats).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed or truncated binary file, wrong magic, config mismatch.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exhaustive enumeration refused because the candidate count exceeds the guard.
class SearchSpaceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace asbf
