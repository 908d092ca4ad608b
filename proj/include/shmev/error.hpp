#pragma once

#include <stdexcept>
#include <string>

namespace shmev {

/// Invalid argument to a density, cdf, quantile or sampler (e.g. a negative scale).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Shapes or dimensions that do not fit together.
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Root-finding, factorization or sampling that failed to converge.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace shmev
