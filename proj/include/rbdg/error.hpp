#pragma once

#include <stdexcept>
#include <string>

namespace rbdg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violation in a library call.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A randomized generator exhausted its retry budget.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// Numerical failure inside a solver (singular system, divergence).
class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what, int outer_iteration = -1)
      : Error(outer_iteration < 0
                  ? what
                  : "outer iteration " + std::to_string(outer_iteration) + ": " + what),
        outer_iteration_(outer_iteration) {}

  int outer_iteration() const noexcept { return outer_iteration_; }

 private:
  int outer_iteration_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rbdg
