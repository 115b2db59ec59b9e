#pragma once

#include <stdexcept>
#include <string>

namespace rollcast {

/// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Array shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Operation called in the wrong order (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incomplete configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint manifest or blob is corrupt or incompatible.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared during integration or training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class IntegrationBlowup : public DivergenceError {
 public:
  IntegrationBlowup(double time)
      : DivergenceError("roll integration produced a non-finite state at t = " + std::to_string(time) + " s"),
        time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

}  // namespace rollcast
