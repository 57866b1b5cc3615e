#pragma once

#include <stdexcept>
#include <string>

namespace ramix {

// Base for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value violates a documented invariant or precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A file could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Matrix or table shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// An iterative solver did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int component)
      : Error(what), component_(component) {}
  int component() const noexcept { return component_; }

 private:
  int component_;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace ramix
