#pragma once

#include <stdexcept>
#include <string>

namespace stseg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input, configuration or precondition. The CLI maps this to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A NaN/Inf showed up where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A training procedure finished without meeting its success criterion.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace stseg
