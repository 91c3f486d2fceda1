#pragma once

#include <stdexcept>
#include <string>

namespace shapepoint {

// Base of every error raised by the library. kind() is the stable,
// machine-readable category printed by the CLI.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "ConfigError"; }
};

class FormatError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "FormatError"; }
};

class GeometryError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "GeometryError"; }
};

class MetricError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "MetricError"; }
};

class SolverError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "SolverError"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "ShapeError"; }
};

class ContractError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "ContractError"; }
};

class HarnessError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "HarnessError"; }
};

class DivergenceError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "DivergenceError"; }
};

class InternalError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "InternalError"; }
};

}  // namespace shapepoint
