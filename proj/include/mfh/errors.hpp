#pragma once

#include <stdexcept>
#include <string>

namespace mfh {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Index out of range, arity mismatch, misaligned grids.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// State space or enumeration too large for the configured caps.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Invalid model data (non-Hermitian, asymmetric kernel, negative rate, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class UnsupportedModeError : public Error {
 public:
  using Error::Error;
};

// Time integration left its quality envelope; carries the measured defect.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double measured)
      : Error(what), measured_(measured) {}
  double measured() const noexcept { return measured_; }

 private:
  double measured_;
};

// Configuration parse failure, always tied to a line and key.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line, std::string key)
      : Error(what), line_(line), key_(std::move(key)) {}
  int line() const noexcept { return line_; }
  const std::string& key() const noexcept { return key_; }

 private:
  int line_;
  std::string key_;
};

}  // namespace mfh
