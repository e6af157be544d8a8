#pragma once

#include <stdexcept>
#include <string>

namespace cvxlse {

/// Malformed or non-finite input data.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the domain where an operation is defined.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Operation called on an object of the wrong mode (density vs regression).
class ModeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace cvxlse
