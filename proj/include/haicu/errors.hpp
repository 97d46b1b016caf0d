#pragma once

#include <stdexcept>
#include <string>

namespace haicu {

/// Base class for every domain error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// Raised when a requested timestep has no agents in a scene.
class EmptyScene : public Error {
public:
    using Error::Error;
};

class SimplexViolation : public Error {
public:
    using Error::Error;
};

/// An AgentTrack / Scene invariant does not hold.
class InvariantViolation : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& reason)
        : Error("line " + std::to_string(line) + ": " + reason), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class NotFound : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class Divergence : public Error {
public:
    Divergence(long batch_id, const std::string& what)
        : Error(what), batch_id_(batch_id) {}

    long batch_id() const { return batch_id_; }

private:
    long batch_id_;
};

}  // namespace haicu
