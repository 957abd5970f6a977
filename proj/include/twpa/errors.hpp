#pragma once

#include <stdexcept>
#include <string>

namespace twpa {

// Base for every error raised by the library. The CLI maps the subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: unknown mode, negative rate, malformed config.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A numerical result cannot be trusted: truncation leak, non-Hermitian generator,
// broken normalization.
class NumericError : public Error {
 public:
  using Error::Error;
};

// An iterative method (ODE integrator, quadrature, fit) failed to reach its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double achieved)
      : Error(what + " (achieved error " + std::to_string(achieved) + ")"), achieved_(achieved) {}
  double achieved() const { return achieved_; }

 private:
  double achieved_;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace twpa
