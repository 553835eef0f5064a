#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace tvcov {

//! Base for all library errors. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

//! Invalid argument or configuration value (exit code 2).
class ParameterError : public Error {
public:
  using Error::Error;
};

//! Malformed, missing or misaligned input data (exit code 3).
class DataError : public Error {
public:
  using Error::Error;
};

//! Numerical failure: non-finite input, loss of definiteness, rank deficiency (exit code 4).
class NumericError : public Error {
public:
  explicit NumericError(const std::string& what, std::optional<double> lambda_min = std::nullopt)
      : Error(what), lambda_min_(lambda_min) {}

  std::optional<double> lambda_min() const { return lambda_min_; }

private:
  std::optional<double> lambda_min_;
};

}  // namespace tvcov
