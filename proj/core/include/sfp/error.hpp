#pragma once

#include <stdexcept>
#include <string>

namespace sfp {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (shape, range, dimension).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Reading or writing a file failed.
class IoError : public Error {
public:
    using Error::Error;
};

/// A serialized container is truncated, has a bad magic or an unknown version.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A non-finite value appeared; `layer` names where.
class NumericError : public Error {
public:
    NumericError(std::string layer, const std::string& what)
        : Error(layer + ": " + what), layer_(std::move(layer)) {}

    const std::string& layer() const noexcept { return layer_; }

private:
    std::string layer_;
};

/// A pipeline stage produced no usable result (empty map, no landmarks, ...).
class PipelineError : public Error {
public:
    using Error::Error;
};

}  // namespace sfp
