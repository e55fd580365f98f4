#pragma once

#include <stdexcept>
#include <string>

namespace deepma {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidShape : public Error {
 public:
  using Error::Error;
};

// Violated precondition of an operation (bad argument values, empty inputs).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Input that cannot be processed numerically, e.g. an all-zero feature.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class DeepFade : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace deepma
