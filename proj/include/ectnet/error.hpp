#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace ectnet {

/// Base for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument values (non-unit directions, level 0, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Tensor or matrix shapes that do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Input whose geometry makes the requested operation undefined.
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

class UnsupportedSchemeError : public Error {
public:
    using Error::Error;
};

/// Configuration or manifest constraint violation; carries the offending field.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& message)
        : Error(field.empty() ? message : "field \"" + field + "\": " + message),
          field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Text format error; line numbers are 1-based.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Non-fatal diagnostics go through one process-wide sink (stderr by default).
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace ectnet
