#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ksfv {

/// A state vector contains values the operation cannot accept (NaN, inf).
class InvalidState : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The model violates an assumption the solver relies on.
class UnsupportedModel : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative solve did not reach tolerance. Carries the last iterate.
class ConvergenceFailure : public std::runtime_error {
public:
    ConvergenceFailure(const std::string& what, std::vector<double> last_iterate, double residual)
        : std::runtime_error(what), last_iterate_(std::move(last_iterate)), residual_(residual)
    {
    }

    const std::vector<double>& last_iterate() const { return last_iterate_; }
    double residual() const { return residual_; }

private:
    std::vector<double> last_iterate_;
    double residual_;
};

/// Neither Newton nor the monotone fallback produced an admissible step.
class StepFailure : public std::runtime_error {
public:
    StepFailure(const std::string& what, std::size_t step_index = 0)
        : std::runtime_error(what), step_index_(step_index)
    {
    }

    std::size_t step_index() const { return step_index_; }

private:
    std::size_t step_index_;
};

} // namespace ksfv
