#pragma once

#include <stdexcept>
#include <string>

namespace gsconv {

// All library failures derive from Error so the CLI can map them to a
// single-line "error[category]: message" diagnostic and a nonzero exit.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const { return category_; }

private:
    std::string category_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class BoundsError : public Error {
public:
    explicit BoundsError(const std::string& message) : Error("bounds", message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io", message) {}
};

class StateError : public Error {
public:
    explicit StateError(const std::string& message) : Error("state", message) {}
};

}  // namespace gsconv
