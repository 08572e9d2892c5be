#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hapf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// e_alpha^2 + e_beta^2 fell below the singularity floor, so K cannot be inverted.
class SingularVoltageError : public Error {
public:
    using Error::Error;
};

/// The diode conduction pattern did not settle within the iteration limit.
class SolverError : public Error {
public:
    using Error::Error;
};

/// Spectrum/THD preconditions (integral-cycle window, nonzero fundamental).
class AnalysisError : public Error {
public:
    using Error::Error;
};

/// Scenario document problems. `line()` is 0 when the error is not tied to a line.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, std::size_t line = 0)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Two run summaries cannot be compared (different f1 or analysis window).
class ComparisonError : public Error {
public:
    using Error::Error;
};

} // namespace hapf
