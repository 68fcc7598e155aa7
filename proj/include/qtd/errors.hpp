#pragma once

#include <stdexcept>
#include <string>

namespace qtd {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a structural invariant (row sums, shapes, ranges).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation (tau not in (0,1), m = 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Operation requires a reward model kind the input does not provide.
class UnsupportedModelError : public Error {
 public:
  using Error::Error;
};

// Numerical routine failed (bracket search exhausted, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace qtd
