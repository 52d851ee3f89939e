#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ital {

/// Operand shapes disagree (parameter rows/cols vs. loss, features vs. weights).
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A value that must be finite came out infinite or NaN.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An iterative solver hit its sweep cap before reaching tolerance.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual, std::size_t sweeps)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + " after " +
                             std::to_string(sweeps) + " sweeps)"),
          residual_(residual), sweeps_(sweeps) {}

    double residual() const noexcept { return residual_; }
    std::size_t sweeps() const noexcept { return sweeps_; }

private:
    double residual_;
    std::size_t sweeps_;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. `line()` is 1-based; 0 when not tied to a line.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace ital
