#pragma once

#include <stdexcept>
#include <string>

namespace frg {

/// Base class for all frg-flow errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed configuration (file, section, key, or value).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Non-finite or otherwise invalid point passed to a density/form.
class DomainError : public Error {
public:
  using Error::Error;
};

/// Integrand overflowed or produced a non-finite value.
class EvaluationError : public Error {
public:
  using Error::Error;
};

/// Rejection sampler failed (acceptance rate collapsed).
class SamplerError : public Error {
public:
  using Error::Error;
};

/// Newton iteration failed to converge; message carries the trace.
class ConvergenceError : public Error {
public:
  using Error::Error;
};

/// Violated caller-side precondition (monotonicity, grid shape, ...).
class PreconditionError : public Error {
public:
  using Error::Error;
};

/// Monte Carlo estimate too weak to be usable.
class EstimationError : public Error {
public:
  using Error::Error;
};

/// Internal cross-check failed (e.g. probability mass not summing to 1).
class ConsistencyError : public Error {
public:
  using Error::Error;
};

/// Filesystem failure while writing reports or plots.
class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace frg
