#pragma once

#include <stdexcept>
#include <string>

namespace mixsched {

// Caller broke a documented precondition (bad dimensions, non-finite input, ...).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// The truncated model would be too large to enumerate.
class ModelSizeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// grad log pi(a|s) requested for an action the policy never plays.
class UndefinedScore : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Numerical failure inside a solver or the ascent loop (NaN gradient, residual blow-up).
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace mixsched
