#pragma once

#include <stdexcept>
#include <string>

namespace mjghd {

/// Base of every exception thrown by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function (e.g. z <= 0).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Argument inside the domain but outside the supported numeric range.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Invalid distribution or model parameters.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// A fit (or one start of it) could not proceed.
class FitError : public Error {
public:
    using Error::Error;
};

/// Malformed input text (delimited data, model documents).
class ParseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace mjghd
