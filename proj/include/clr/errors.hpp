#pragma once

#include <stdexcept>
#include <string>

namespace clr {

/// Malformed or invalid input: unreadable files, bad shapes, violated
/// dataset or configuration invariants.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical quantity that must be nonsingular or nonnegative is not,
/// e.g. a degenerate residual or a singular Gram matrix.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace clr
