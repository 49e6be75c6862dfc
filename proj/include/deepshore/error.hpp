#pragma once

#include <stdexcept>
#include <string>

namespace deepshore {

/// Bad argument or violated precondition (usage error).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Base class for data and numeric failures.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Normal equations are singular or too ill-conditioned to solve unregularized.
class SingularSystem : public NumericError {
public:
    using NumericError::NumericError;
};

/// Angular correlation is undefined because a series has no anisotropic energy.
class UndefinedCorrelation : public NumericError {
public:
    using NumericError::NumericError;
};

/// exp() of a value would overflow.
class Saturation : public NumericError {
public:
    using NumericError::NumericError;
};

/// The scale optimizer met a non-finite objective.
class OptimizationFailure : public NumericError {
public:
    OptimizationFailure(const std::string& what, double last_valid_zeta)
        : NumericError(what), last_valid_zeta_(last_valid_zeta) {}

    double last_valid_zeta() const noexcept { return last_valid_zeta_; }

private:
    double last_valid_zeta_;
};

/// Malformed or mismatched file contents.
class FormatError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace deepshore
