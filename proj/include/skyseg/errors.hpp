#pragma once

#include <stdexcept>
#include <string>

namespace skyseg {

// Base class for every error this library raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor/grid dimensions do not satisfy an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A region lies outside the addressable area it indexes into.
class BoundsError : public Error {
public:
    using Error::Error;
};

// A scalar argument is outside its documented range.
class ParamError : public Error {
public:
    using Error::Error;
};

// Two configured components disagree (channel layouts, key sets, enums).
class ConfigError : public Error {
public:
    using Error::Error;
};

// An operation was invoked before its required state was initialized.
class StateError : public Error {
public:
    using Error::Error;
};

// A byte stream is not a well-formed frame (bad magic, truncation).
class FrameError : public Error {
public:
    using Error::Error;
};

// A value cannot be represented in the wire format.
class EncodeError : public Error {
public:
    using Error::Error;
};

}  // namespace skyseg
