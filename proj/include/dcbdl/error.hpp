#pragma once

#include <stdexcept>
#include <string>

namespace dcbdl {

// Caller broke an operation's precondition (shape mismatch, non-scalar loss, ...).
struct ContractViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Value outside the mathematical domain of an operation (log of non-positive, ...).
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A computation produced NaN/Inf; surfaced instead of propagated.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dcbdl
