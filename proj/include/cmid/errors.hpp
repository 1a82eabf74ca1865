#pragma once

#include <stdexcept>
#include <string>

namespace cmid {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Raised when a requested object would exceed the configured size cap.
class SizeLimitError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent configuration; `field()` names the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A persistency-of-excitation gate rejected a stage.
class PeGateError : public Error {
public:
    PeGateError(std::string stage, double condition_number)
        : Error("excitation gate failed at " + stage + " (condition number " +
                std::to_string(condition_number) + ")"),
          stage_(std::move(stage)), cond_(condition_number) {}
    const std::string& stage() const noexcept { return stage_; }
    double condition_number() const noexcept { return cond_; }

private:
    std::string stage_;
    double cond_;
};

}  // namespace cmid
