#pragma once

#include <stdexcept>
#include <string>

namespace qol {

/// Base for every error raised by the library. CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, datasets).
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or parameter values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, infeasible numerical problems, non-convergence.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace qol
