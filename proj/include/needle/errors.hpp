#pragma once

#include <stdexcept>
#include <string>

namespace needle {

/// Argument outside the operation's domain (non-finite, negative tension, ...).
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Configuration value violates its invariant (T_s <= 0, horizon < 1, ...).
class InvalidConfig : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateFit : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Objective or gradient became non-finite inside the optimizer.
class NumericalFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class OutOfRange : public std::out_of_range {
public:
  using std::out_of_range::out_of_range;
};

/// Closed-loop simulation exceeded its fault budget.
class SimulationFault : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace needle
