#pragma once

#include <stdexcept>
#include <string>

namespace msens {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or unreadable input file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A precondition on arguments or configuration was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A pipeline stage needs an artifact that a prior stage has not produced.
class MissingArtifact : public Error {
public:
    using Error::Error;
};

/// Reported figures contradict each other.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

}  // namespace msens
