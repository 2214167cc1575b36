#pragma once

#include <stdexcept>
#include <string>

namespace rfn {

// Dimension or rank disagreement between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced or consumed where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed binary or text file (bad magic, version, truncation, syntax).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A checkpoint or dataset that does not fit the model it is applied to.
class MismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File system failure: unreadable input, unwritable output.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rfn
