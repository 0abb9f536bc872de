#pragma once

#include <stdexcept>
#include <string>

namespace semgrasp {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape mismatches, invalid layer hyperparameters, bad probability inputs.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid or rejected configuration (maps to CLI exit code 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File format, checksum, or version problems on persisted artifacts.
class IoError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: NaN/Inf where finite values are required.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace semgrasp
