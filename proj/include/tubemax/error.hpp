#pragma once

#include <stdexcept>
#include <string>

namespace tubemax {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Chart whose metric is rank deficient (or numerically so).
class DegenerateChartError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// G + C is singular at a point, so the curvature invariants are undefined there.
class SingularGeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Quadrature or iterative refinement failed to reach the requested tolerance.
class AccuracyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A formula was requested outside the range where it is exact.
class PreconditionError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// C^2 maximum of the variance is not quadratic in the normal directions.
class DegenerateMaximumError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace tubemax
