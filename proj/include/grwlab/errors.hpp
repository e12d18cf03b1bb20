#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace grwlab {

// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Errors caused by bad inputs (parameters, files, configuration). The CLI maps
// these to exit code 1; everything else under Error maps to exit code 2.
class InputError : public Error {
public:
    using Error::Error;
};

class DomainError : public InputError {
public:
    using InputError::InputError;
};

class ShapeError : public InputError {
public:
    using InputError::InputError;
};

class PreconditionError : public InputError {
public:
    using InputError::InputError;
};

class StepSizeError : public InputError {
public:
    using InputError::InputError;
};

class ConfigurationError : public InputError {
public:
    using InputError::InputError;
};

class ParseError : public InputError {
public:
    ParseError(std::size_t row, const std::string& what)
        : InputError("row " + std::to_string(row) + ": " + what), row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class FormatError : public InputError {
public:
    FormatError(std::size_t offset, const std::string& what)
        : InputError("byte offset " + std::to_string(offset) + ": " + what), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class DegeneracyError : public Error {
public:
    using Error::Error;
};

class ZeroSupportError : public Error {
public:
    using Error::Error;
};

class TimeoutError : public Error {
public:
    using Error::Error;
};

class StatisticsError : public Error {
public:
    using Error::Error;
};

}  // namespace grwlab
