#pragma once

#include <stdexcept>
#include <string>

namespace cavscat {

/// Base class for all library errors. The module tag is prepended to the
/// message so CLI diagnostics name the failing component.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error("[" + module + "] " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Request exceeds a configured capability (e.g. order above l_cap).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: singular systems, instability, NaN.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Mesh construction produced an invalid element.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Mesh connectivity is inconsistent.
class TopologyError : public Error {
 public:
  using Error::Error;
};

}  // namespace cavscat
