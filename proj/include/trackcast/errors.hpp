#pragma once

#include <stdexcept>
#include <string>

namespace trackcast {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor/matrix shapes. Message names the op and both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Math-domain violations (log of non-positive input, sqrt of negative, ...).
struct DomainError : Error {
    using Error::Error;
};

// Solve failures, NaN divergence, singular innovation covariance.
struct NumericalError : Error {
    using Error::Error;
};

// Malformed input text. Carries file and 1-based line context.
struct ParseError : Error {
    std::string file;
    long line = 0;

    ParseError(std::string file_, long line_, const std::string& what_)
        : Error(file_.empty()
                    ? "line " + std::to_string(line_) + ": " + what_
                    : file_ + ":" + std::to_string(line_) + ": " + what_),
          file(std::move(file_)),
          line(line_) {}
};

struct IoError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace trackcast
