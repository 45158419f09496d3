#pragma once

#include <stdexcept>
#include <string>

namespace cfm {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A time or argument falls on a singularity or outside a formulation's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// NaN or infinity encountered where finite values are required.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value. `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss or parameter.
class DivergenceError : public Error {
 public:
  DivergenceError(long step, const std::string& message) : Error(message), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace cfm
