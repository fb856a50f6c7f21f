#ifndef OHJ_ERROR_HPP_
#define OHJ_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace ohj {

//! Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

//! A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

//! Malformed or incomplete key-value configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

//! A solver could not honour its contract (CFL, Lax-Friedrichs bound,
//! Newton failure, stagnation).
class SolverError : public Error {
 public:
  using Error::Error;
};

//! Raised when a stationary obstacle problem is requested in a regime
//! where no solution exists (positive ergodic constant).
class NoSolutionRegime : public SolverError {
 public:
  using SolverError::SolverError;
};

}  // namespace ohj

#endif  // OHJ_ERROR_HPP_
