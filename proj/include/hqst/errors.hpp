#pragma once

#include <stdexcept>
#include <string>

namespace hqst {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Incompatible configurations, e.g. a model applied to data binned differently.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// An estimator could not produce a result from the given data.
class EstimationError : public std::runtime_error {
 public:
  explicit EstimationError(const std::string& what) : std::runtime_error(what) {}
};

class DivergenceError : public EstimationError {
 public:
  explicit DivergenceError(const std::string& what) : EstimationError(what) {}
};

/// Malformed or unreadable input file.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hqst
