#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace odereg {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Knot placement could not produce the requested number of distinct knots.
class DegenerateKnotsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Adaptive integration gave up (step-size underflow or non-finite state).
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double last_time)
        : std::runtime_error(what), last_time_(last_time) {}

    double last_time() const noexcept { return last_time_; }

private:
    double last_time_;
};

/// Input data or configuration failed validation. Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Objective is not finite at the starting point of a fit.
class InitializationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A covariance ingredient (information or slope matrix) is singular.
class RankDeficiencyError : public std::runtime_error {
public:
    RankDeficiencyError(const std::string& what, std::vector<double> null_direction)
        : std::runtime_error(what), null_direction_(std::move(null_direction)) {}

    const std::vector<double>& null_direction() const noexcept { return null_direction_; }

private:
    std::vector<double> null_direction_;
};

}  // namespace odereg
