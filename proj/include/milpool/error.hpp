#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace milpool {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Argument outside the domain of an operation (empty input, negative measure, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration: zero dimensions, infeasible generator spec, empty class.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A call violated an API contract (e.g. attention pooling without a measure).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Operation called in the wrong state (e.g. backward before forward).
class StateError : public Error {
public:
    using Error::Error;
};

/// Non-finite value encountered during training.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed binary file. Carries the byte offset where parsing failed.
class ParseError : public Error {
public:
    enum class Kind { bad_magic, bad_version, truncated, corrupt, io };

    ParseError(Kind kind, std::uint64_t offset, const std::string& what)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
          kind_(kind), offset_(offset) {}

    Kind kind() const noexcept { return kind_; }
    std::uint64_t offset() const noexcept { return offset_; }

private:
    Kind kind_;
    std::uint64_t offset_;
};

} // namespace milpool
