#pragma once

#include <stdexcept>
#include <string>

namespace bhp {

// Malformed offspring law or model parameters.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation called outside its domain (negative step, t <= 0, ...).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Offspring law with zero mean where a size-biased law is needed.
class DegenerateLawError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Principal eigenvalue is not negative.
class SubcriticalityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Population cap exceeded during forward simulation.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Eigensolver or series did not converge.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bhp
