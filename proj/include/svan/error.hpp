#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace svan {

/// Broad failure categories. The CLI maps each to a distinct exit code.
enum class ErrorKind {
    Dimension,    // shape / channel / size contract violated
    Corrupt,      // bad magic, truncated or inconsistent file
    Unsupported,  // valid file we refuse to handle (16-bit PNG, interlacing)
    Io,           // missing path, unreadable or unwritable file
    Config,       // config file or option value rejected
    Usage,        // bad command-line usage
    Numeric,      // non-finite values during training
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(ErrorKind::Dimension, what) {}
};

class CorruptFileError : public Error {
public:
    explicit CorruptFileError(const std::string& what) : Error(ErrorKind::Corrupt, what) {}
};

class UnsupportedError : public Error {
public:
    explicit UnsupportedError(const std::string& what) : Error(ErrorKind::Unsupported, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& what, int line = 0)
        : Error(ErrorKind::Config, line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}

    int line() const noexcept { return line_; }

private:
    int line_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

}  // namespace svan
