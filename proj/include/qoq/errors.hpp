#pragma once

#include <stdexcept>
#include <string>

namespace qoq {

/// I/O failures: missing files, unreadable paths, unwritable output dirs.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input content (bad CSV cell, unparseable date, duplicate month).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A documented precondition was violated (too few observations, gaps
/// under the strict policy, zero-variance column, ...).
class PreconditionError : public std::runtime_error {
public:
    explicit PreconditionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure inside an estimator (non-PD innovation covariance,
/// EM divergence, degenerate test variance).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace qoq
