#pragma once

#include <stdexcept>
#include <string>

namespace gsi {

// Error taxonomy maps 1:1 onto CLI exit codes (see exit_code()).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user input: config files, CLI flags, dimension mismatches in API calls.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem and artifact-format problems.
struct IoError : Error {
    using Error::Error;
};

// Numerical breakdown: non-finite values, failed convergence, degenerate input.
struct NumericalError : Error {
    using Error::Error;
};

// A cached weight image no longer matches the basis it was built from.
struct StaleCacheError : NumericalError {
    using NumericalError::NumericalError;
};

inline int exit_code(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const IoError*>(&e)) return 3;
    if (dynamic_cast<const NumericalError*>(&e)) return 4;
    return 1;
}

}  // namespace gsi
