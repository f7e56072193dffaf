#pragma once

#include <stdexcept>
#include <string>

namespace csps {

// Bad input: malformed data, inconsistent labels, invalid configuration.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Numerical breakdown inside the sampler or the Gaussian algebra.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace csps
