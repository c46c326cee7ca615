#pragma once

#include <stdexcept>
#include <string>

namespace anim {

// Base class for all library errors. Subclasses map onto CLI exit codes:
// validation/config/parse -> 2, I/O -> 3, version mismatch -> 4, numeric -> 5.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Precondition or API-contract breach (caller bug).
class ContractError : public Error {
public:
    using Error::Error;
};

// Input data that fails a domain invariant (bad angle, non-finite value, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed text input; carries the 1-based line the parser choked on.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, int line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// Joint-name table entry that does not resolve to a canonical joint.
class MappingError : public Error {
public:
    using Error::Error;
};

// Procedural clip generation failed (e.g. unreachable pointing target).
class GenerationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Operation called in an invalid state (e.g. sampling from an empty buffer).
class StateError : public Error {
public:
    using Error::Error;
};

// Non-finite value produced inside model evaluation or training.
class NumericFault : public Error {
public:
    explicit NumericFault(const std::string& context)
        : Error("numeric fault: " + context), context_(context) {}
    const std::string& context() const { return context_; }

private:
    std::string context_;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Checkpoint/library signal-layout incompatibility.
class VersionError : public Error {
public:
    using Error::Error;
};

} // namespace anim
