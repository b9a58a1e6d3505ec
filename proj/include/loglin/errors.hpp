#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace loglin {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A requested enumeration/table would exceed the configured size limits.
struct CapacityError : Error {
    using Error::Error;
};

// Inputs violate a type invariant (bad cluster, dimension mismatch, ...).
struct InvalidArgumentError : Error {
    using Error::Error;
};

// Numeric failure while fitting one structure. Carries the structure's
// stable hash so callers can report which model failed.
struct FitError : Error {
    FitError(const std::string& msg, std::uint64_t structure_hash)
        : Error(msg), structure_hash(structure_hash) {}
    std::uint64_t structure_hash;
};

// Malformed input file; line is 1-based.
struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line(line) {}
    std::size_t line;
};

// A requested estimate is undefined (e.g. conditioning on an event of
// probability zero).
struct UndefinedEstimateError : Error {
    using Error::Error;
};

// Input produced no usable observations.
struct EmptyDataError : Error {
    using Error::Error;
};

}  // namespace loglin
