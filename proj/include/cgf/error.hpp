#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cgf {

// Base of every error the library throws. The CLI maps InputError-derived
// failures to exit code 2 and NumericError-derived ones to exit code 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class ParseError : public InputError {
public:
    ParseError(std::size_t line, const std::string& what)
        : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class RangeError : public InputError {
public:
    using InputError::InputError;
};

class ShapeError : public InputError {
public:
    using InputError::InputError;
};

// Corrupt, truncated or mismatched binary files (dataset cache, checkpoint).
class FormatError : public InputError {
public:
    using InputError::InputError;
};

class ConfigError : public InputError {
public:
    using InputError::InputError;
};

class UndefinedBearingError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace cgf
