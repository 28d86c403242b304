#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace mpisentinel {

/// Base class for every failure raised by the toolkit. `kind()` is a stable
/// machine-readable name (e.g. "MalformedIr") used by the CLI's JSON errors.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class MalformedIr : public Error {
public:
    MalformedIr(std::size_t line, const std::string& message)
        : Error("MalformedIr", "line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class UndefinedLocal : public Error {
public:
    explicit UndefinedLocal(const std::string& id)
        : Error("UndefinedLocal", "undefined local value " + id), id_(id) {}

    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

class SchemaViolation : public Error {
public:
    SchemaViolation(std::string pointer, const std::string& message)
        : Error("SchemaViolation", pointer + ": " + message), pointer_(std::move(pointer)) {}

    /// JSON pointer to the offending location.
    const std::string& pointer() const noexcept { return pointer_; }

private:
    std::string pointer_;
};

}  // namespace mpisentinel
