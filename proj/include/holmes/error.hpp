#pragma once

#include <stdexcept>
#include <string>

namespace holmes {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input document (JSON, tensor container, image file).
class ParseError : public Error {
public:
    using Error::Error;
};

// Well-formed input that breaks a documented invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

// A concept could not be mapped to a part list.
class ResolutionError : public Error {
public:
    using Error::Error;
};

// Feature extractor missing, unavailable, or returning the wrong shape.
class BackendError : public Error {
public:
    using Error::Error;
};

// Pipeline stage failure that is not attributable to bad user input.
class PipelineError : public Error {
public:
    using Error::Error;
};

}  // namespace holmes
