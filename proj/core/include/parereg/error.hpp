#pragma once

#include <stdexcept>
#include <string>

namespace parereg {

/// Malformed input: wrong dimensions, empty containers, bad files.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The geometry admits no (unique) answer: collinear points, rank-deficient
/// features, crops that leave nothing behind.
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace parereg
