#pragma once

#include <stdexcept>
#include <string>

namespace cpinn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed configuration, unknown problem names and other user-input faults.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg, int line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

class RegistryError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class InvalidArchitecture : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Numerical failures: divergence, degenerate coefficients, loss of convexity.
class NumericalError : public Error {
public:
    using Error::Error;
};

class PropagationError : public NumericalError {
public:
    PropagationError(const std::string& msg, int coordinate)
        : NumericalError(msg + " (coordinate " + std::to_string(coordinate) + ")"),
          coordinate_(coordinate) {}
    int coordinate() const { return coordinate_; }

private:
    int coordinate_;
};

class InvalidHandle : public Error {
public:
    using Error::Error;
};

class DegenerateCoefficient : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class GeometryError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NonConvexityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class MassBalanceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class SingularSystemError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace cpinn
