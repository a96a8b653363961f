#pragma once

#include <stdexcept>
#include <string>

namespace grasp {

// Base of every error the library throws. kind() is a stable, machine-parsable
// tag used by the command-line front end.
class Error : public std::runtime_error
{
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class DimensionError : public Error
{
public:
    explicit DimensionError(const std::string& message) : Error("dimension", message) {}
};

class ConfigError : public Error
{
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class IoError : public Error
{
public:
    explicit IoError(const std::string& message) : Error("io", message) {}
};

class IntegrityError : public Error
{
public:
    explicit IntegrityError(const std::string& message) : Error("integrity", message) {}
};

class NumericError : public Error
{
public:
    explicit NumericError(const std::string& message) : Error("numeric", message) {}
};

} // namespace grasp
