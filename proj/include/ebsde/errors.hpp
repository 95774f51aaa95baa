#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ebsde {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or incomplete configuration. `key()` names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class NameError : public Error {
 public:
  using Error::Error;
};

class DimError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be symmetric positive definite is not.
class DegenerateZ : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

/// Every block of the quasi-likelihood has a degenerate covariance proxy.
class AllDegenerate : public Error {
 public:
  using Error::Error;
};

class SingularSystem : public Error {
 public:
  using Error::Error;
};

class OptFailure : public Error {
 public:
  using Error::Error;
};

class MetricUndefined : public Error {
 public:
  using Error::Error;
};

class DegenerateGamma : public Error {
 public:
  using Error::Error;
};

/// Non-finite state during path integration.
class SimulationBlowup : public Error {
 public:
  SimulationBlowup(std::int64_t step, const std::string& what)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}

  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

}  // namespace ebsde
