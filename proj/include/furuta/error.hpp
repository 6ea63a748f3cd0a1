#pragma once

#include <stdexcept>
#include <string>

namespace furuta {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix shapes are inconsistent with the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A linear system or matrix inverse is (numerically) singular.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be positive definite is not.
class DefinitenessError : public Error {
 public:
  using Error::Error;
};

/// An iterative numerical routine failed to converge, or input was not finite.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Physical parameters violate their invariants.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Controller synthesis (Riccati iteration, stabilizing initialization) failed.
class SynthesisError : public Error {
 public:
  using Error::Error;
};

/// Tracking prefilter cannot be formed.
class PrefilterError : public Error {
 public:
  using Error::Error;
};

/// Gaussian-process kernel matrix could not be factored even after jitter.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace furuta
