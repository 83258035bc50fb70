#pragma once

#include <stdexcept>
#include <string>

namespace srlprobe {

/// Base of every error raised by the library. `exit_code()` is what the CLI
/// returns when the error escapes a subcommand.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Bad input: malformed files, invalid configs, out-of-range indices.
class ValidationError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// NaN/Inf in a loss or gradient, or training divergence.
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// A quantity whose defining formula degenerates (zero denominator,
/// zero variance). Callers decide whether to skip or report absent.
class UndefinedError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// An artifact a stage depends on (checkpoint, baseline, report) is missing.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// Raised by example encoding when a record cannot be used; carries a short
/// machine-readable reason for the skip report.
class SkipExample : public Error {
 public:
  SkipExample(std::string reason, const std::string& what)
      : Error(what), reason_(std::move(reason)) {}
  const std::string& reason() const noexcept { return reason_; }
  int exit_code() const noexcept override { return 2; }

 private:
  std::string reason_;
};

}  // namespace srlprobe
