#pragma once

#include <stdexcept>
#include <string>

namespace mvlme {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data or configuration (CLI exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Failed factorization or non-finite quantity inside the sampler (CLI exit code 3).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvlme
