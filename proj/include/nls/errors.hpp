#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nls {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failures (CLI exit code 3).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DomainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularMatrix : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularHessian : public SingularMatrix {
 public:
  using SingularMatrix::SingularMatrix;
};

class NoConvergence : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NonFiniteState : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class BranchAmbiguity : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class FlowEscape : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Failed verifications (CLI exit code 1).
class VerificationError : public Error {
 public:
  using Error::Error;
};

class NotWellDefined : public VerificationError {
 public:
  using VerificationError::VerificationError;
};

class NotAffine : public VerificationError {
 public:
  using VerificationError::VerificationError;
};

class NotSubducible : public VerificationError {
 public:
  using VerificationError::VerificationError;
};

class HypothesisFailed : public VerificationError {
 public:
  using VerificationError::VerificationError;
};

class NotPrincipal : public VerificationError {
 public:
  using VerificationError::VerificationError;
};

// Input errors (CLI exit code 2).
class InputError : public Error {
 public:
  using Error::Error;
};

class SyntaxError : public InputError {
 public:
  SyntaxError(const std::string& what, std::size_t offset)
      : InputError(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnknownIdentifier : public InputError {
 public:
  using InputError::InputError;
};

class ArityError : public InputError {
 public:
  using InputError::InputError;
};

class BasePointMismatch : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : ConfigError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DimensionMismatch : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace nls
