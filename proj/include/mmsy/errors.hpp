// Exception taxonomy. ValidationError / ParseError map to CLI exit code 2,
// everything else derived from Error maps to exit code 1.
#pragma once

#include <stdexcept>
#include <string>

namespace mmsy {

class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad user input: malformed files, out-of-range values, inconsistent config.
class ValidationError : public Error {
public:
  explicit ValidationError(const std::string& what) : Error(what) {}
};

// Malformed structured text; message carries "file:line" where known.
class ParseError : public ValidationError {
public:
  explicit ParseError(const std::string& what) : ValidationError(what) {}
};

// Numerical trouble: non-PSD covariance, failed factorization, ...
class NumericError : public Error {
public:
  explicit NumericError(const std::string& what) : Error(what) {}
};

// Operating model state became non-finite; names the offending year.
class DivergedError : public NumericError {
public:
  DivergedError(const std::string& what, int year)
      : NumericError(what), year_(year) {}
  int year() const { return year_; }

private:
  int year_;
};

// MCMC failure; carries the iteration index where the chain died.
class FitError : public NumericError {
public:
  FitError(const std::string& what, long iteration)
      : NumericError(what), iteration_(iteration) {}
  long iteration() const { return iteration_; }

private:
  long iteration_;
};

}  // namespace mmsy
