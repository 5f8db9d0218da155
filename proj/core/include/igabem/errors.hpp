#ifndef IGABEM_ERRORS_HPP
#define IGABEM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace igabem {

/// Bad user-facing configuration (unknown geometry name, theta out of range, ...).
class ConfigurationError : public std::runtime_error {
public:
  explicit ConfigurationError(const std::string& what) : std::runtime_error(what) {}
};

/// Knot insertion would exceed the multiplicity cap p+1.
class RefinementError : public std::runtime_error {
public:
  explicit RefinementError(const std::string& what) : std::runtime_error(what) {}
};

/// Quadrature produced non-finite values during Galerkin assembly.
class AssemblyError : public std::runtime_error {
public:
  explicit AssemblyError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical breakdown (factorization failure, residual too large, ...).
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Operation not defined for the given inputs (e.g. derivative of degree-0 splines).
class UnsupportedError : public std::runtime_error {
public:
  explicit UnsupportedError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace igabem

#endif
