#pragma once

#include <stdexcept>
#include <string>

namespace octasam {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or missing input location; the CLI maps this to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Array shapes that do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents (checkpoints, rasters, config files).
class ParseError : public Error {
public:
    using Error::Error;
};

/// A request that cannot be satisfied by the given data, e.g. sampling from an empty label.
class DataError : public Error {
public:
    using Error::Error;
};

}  // namespace octasam
