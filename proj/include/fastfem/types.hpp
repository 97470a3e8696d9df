#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fastfem {

using Index = std::int32_t;

/// Raised for malformed inputs: bad sizes, indices out of range, bad config values.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical routine meets a value it cannot handle
/// (non-finite positions, non-positive pivots, degenerate elements).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fastfem
