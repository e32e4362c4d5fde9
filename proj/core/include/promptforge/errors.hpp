#pragma once

#include <stdexcept>
#include <string>

namespace promptforge {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible for the requested operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A tensor has the wrong rank (e.g. backward on a non-scalar).
class RankError : public Error {
public:
    using Error::Error;
};

/// A vector too close to zero was used where a direction is needed.
class DegenerateVectorError : public Error {
public:
    using Error::Error;
};

/// A numeric hyper-parameter is outside its valid range.
class ParameterError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

/// Input data does not satisfy an operation's preconditions.
class DataError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class EvaluationError : public Error {
public:
    using Error::Error;
};

}  // namespace promptforge
