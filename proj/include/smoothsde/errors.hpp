#pragma once

#include <stdexcept>
#include <string>

namespace smoothsde {

// User-input problems (exit code 2 at the command line).
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : InputError {
    using InputError::InputError;
};

struct NameError : InputError {
    using InputError::InputError;
};

struct DomainError : InputError {
    using InputError::InputError;
};

struct DataError : InputError {
    using InputError::InputError;
};

struct ConfigError : InputError {
    using InputError::InputError;
};

// Covariate with a single distinct value, factor with a single level, ...
struct DegenerateError : InputError {
    using InputError::InputError;
};

struct UnsupportedError : InputError {
    using InputError::InputError;
};

// Numerical failures (exit code 1 at the command line).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace smoothsde
