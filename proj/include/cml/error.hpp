#pragma once

#include <stdexcept>
#include <string>

namespace cml {

/// Base class for every error raised by the library. `kind()` is a short
/// machine-readable tag ("shape-mismatch", "degenerate-vector", ...).
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind))
    { }

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message) : Error("shape-mismatch", message) { }
};

class DegenerateVector : public Error {
public:
    explicit DegenerateVector(const std::string& message) : Error("degenerate-vector", message) { }
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
      : Error("parse-error", "line " + std::to_string(line) + ": " + message), line_(line)
    { }

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& message)
      : Error("config-error", path + ": " + message), path_(std::move(path))
    { }

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Violated precondition on an argument (empty batch, bad counts, ...).
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& message) : Error("invalid-argument", message) { }
};

} // namespace cml
