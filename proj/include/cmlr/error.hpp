#pragma once

#include <stdexcept>
#include <string>

namespace cmlr {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

// Thrown when elimination meets a pivot below the singularity threshold.
class SingularMatrixError : public Error {
public:
  SingularMatrixError(const std::string& msg, double pivot_magnitude)
      : Error(msg), pivot_magnitude_(pivot_magnitude) {}
  double pivot_magnitude() const noexcept { return pivot_magnitude_; }

private:
  double pivot_magnitude_ = 0.0;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class KeyGenError : public Error {
public:
  using Error::Error;
};

class ProtocolError : public Error {
public:
  using Error::Error;
};

class DivergenceError : public Error {
public:
  using Error::Error;
};

class DataError : public Error {
public:
  using Error::Error;
};

class UndefinedAucError : public Error {
public:
  using Error::Error;
};

}  // namespace cmlr
