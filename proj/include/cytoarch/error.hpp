#pragma once

#include <stdexcept>
#include <string>

namespace cytoarch {

// Base for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied arguments that violate an operation's preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A numerical routine could not produce a usable result (singular system,
// eigensolver failure, empty kernel row).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Reading or writing an artifact failed, or its contents are malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cytoarch
