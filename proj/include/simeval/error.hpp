#pragma once

#include <stdexcept>
#include <string>

namespace simeval {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates an operation's precondition (wrong shape, missing field, bad argument).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Malformed external data: corpus records, caches, model outputs.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Backend transport / capability problems.
class BackendError : public Error {
public:
    using Error::Error;
};

class CapabilityError : public BackendError {
public:
    using BackendError::BackendError;
};

class AuthError : public BackendError {
public:
    using BackendError::BackendError;
};

/// Local rejection because the prompt exceeds the configured character cap.
class ContextLengthError : public BackendError {
public:
    using BackendError::BackendError;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace simeval
