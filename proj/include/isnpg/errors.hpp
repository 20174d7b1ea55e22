#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace isnpg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user-supplied parameter (environment knobs, step sizes, tables).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// An enumeration would exceed its configured cap.
class SizeError : public Error {
 public:
  SizeError(const std::string& what, std::uint64_t required)
      : Error(what), required_(required) {}
  std::uint64_t required() const { return required_; }

 private:
  std::uint64_t required_;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Malformed model, policy or config file. The message names the field.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace isnpg
