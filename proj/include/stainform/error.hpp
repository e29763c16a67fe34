#pragma once

#include <stdexcept>
#include <string>

namespace stainform {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated input file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver gave up before reaching its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace stainform
