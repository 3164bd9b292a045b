#pragma once

#include <stdexcept>
#include <string>

namespace cfrobust {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument or configuration value.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Data that violates a structural requirement (degenerate column, bad cell, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// An iterative fit that failed to reach its tolerance or diverged.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfrobust
