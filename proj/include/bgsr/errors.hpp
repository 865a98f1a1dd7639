#pragma once

#include <stdexcept>
#include <string>

namespace bgsr {

// Argument outside the documented domain of a transform or formula.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// A fixed-point scan found no crossing of the diagonal.
class NoSolution : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An iterative solver exhausted its budget. The last residual is kept so
// callers can report how far off it was.
class NonConvergence : public std::runtime_error {
public:
    NonConvergence(const std::string& what, double residual)
        : std::runtime_error(what + " (last residual " + std::to_string(residual) + ")"),
          residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

}  // namespace bgsr
