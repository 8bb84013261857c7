#pragma once

#include <stdexcept>
#include <string>

namespace beamkit {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller-supplied value violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// File system or file format failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// A computation produced a non-finite or otherwise unusable result.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace beamkit
