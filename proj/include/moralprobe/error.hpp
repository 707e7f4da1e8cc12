#pragma once

#include <stdexcept>
#include <string>

namespace moralprobe {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data or configuration. Maps to CLI exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Scoring backend failure. `retryable` is true for transport-level problems
/// (timeouts, 5xx), false for contract violations.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable, int attempts = 1)
      : Error(what), retryable_(retryable), attempts_(attempts) {}
  bool retryable() const { return retryable_; }
  int attempts() const { return attempts_; }

 private:
  bool retryable_;
  int attempts_;
};

class UnknownModelError : public BackendError {
 public:
  explicit UnknownModelError(const std::string& model_id)
      : BackendError("model '" + model_id + "' is unknown to the backend", false) {}
};

/// On-disk state (bundle, cache) does not match what was recorded.
class CorruptStateError : public Error {
 public:
  using Error::Error;
};

}  // namespace moralprobe
