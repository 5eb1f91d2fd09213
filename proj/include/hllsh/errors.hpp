#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hllsh {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied parameters outside the documented domain.
class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// p2 <= 1/n: the amplification length would round down to zero, so LSH
/// cannot beat a linear scan. Callers usually fall back to brute force.
class AssumptionViolated : public InvalidParameter {
public:
    using InvalidParameter::InvalidParameter;
};

/// A point payload does not match the hash family it is used with.
class KindMismatch : public InvalidParameter {
public:
    using InvalidParameter::InvalidParameter;
};

/// More points than the plan was sized for.
class CapacityExceeded : public Error {
public:
    using Error::Error;
};

/// Malformed input record or file. `line()` is 1-based, 0 when unknown.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line)
    {
    }

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// A numerical invariant that should be impossible in the valid domain.
class InternalError : public Error {
public:
    using Error::Error;
};

} // namespace hllsh
